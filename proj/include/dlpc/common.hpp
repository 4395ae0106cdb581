#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace dlpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;

/// State dimension of one robot and its control dimension.
inline constexpr int kStateDim = 4;
inline constexpr int kInputDim = 2;

/// Failure categories surfaced by the library. The CLI maps each one to a
/// distinct process exit code.
enum class ErrorKind {
  kInvalidArgument,
  kConfig,
  kTopology,
  kNumerical,
  kDivergence,
  kRetryExhausted,
  kIo,
  kVerification,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Largest eigenvalue of a symmetric matrix.
double lambda_max_sym(const Mat& m);
/// Smallest eigenvalue of a symmetric matrix.
double lambda_min_sym(const Mat& m);
/// Largest singular value.
double spectral_norm(const Mat& m);
/// Spectral radius of a general square matrix.
double spectral_radius(const Mat& m);

}  // namespace dlpc
