#pragma once

#include "dlpc/common.hpp"
#include "dlpc/dynamics.hpp"
#include "dlpc/topology.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dlpc {

/// Per-robot cost weights.
struct RobotObjective {
  Mat q;                       ///< 4|N_i| x 4|N_i|, symmetric positive semidefinite
  Mat2 r = 0.5 * Mat2::Identity();  ///< positive definite
  Mat4 p = Mat4::Identity();   ///< terminal penalty on e_i
};

/// Cost specification of the whole team.
struct ObjectiveSpec {
  std::vector<RobotObjective> robots;
  int horizon = 20;
  double beta = 1.1;

  /// Default weights: Q_i = q_scale * I, R_i = r_scale * I, P_i = I.
  static ObjectiveSpec defaults(const Topology& topo, double q_scale = 1.0, double r_scale = 0.5, int horizon = 20,
                                double beta = 1.1);
  /// Checks symmetry and definiteness of every matrix.
  void validate(const Topology& topo) const;
};

/// ||e_N||_Q^2 + ||u||_R^2.
double stage_cost(const Vec& e_nbr, const Vec2& u, const Mat& q, const Mat2& r);
/// Sum of N stage costs plus the terminal quadratic ||e_i(k+N)||_P^2.
double horizon_cost(const std::vector<Vec>& e_nbr, const std::vector<Vec2>& u, const Vec4& e_terminal,
                    const Mat& q, const Mat2& r, const Mat4& p);

/// Teams larger than this skip the stacked certificates: kBlockLmi is replaced
/// by kLocalLyap, gamma_max_eig is NaN, and certify_gains reports a NaN radius.
inline constexpr int kStackedMaxRobots = 200;

/// Static linear gains u_i = K_i e_N with the certified global spectral radius.
struct StabilizingGains {
  std::vector<Mat> k;  ///< 2 x 4|N_i|
  double spectral_radius = 0.0;
};

/// Infinite-horizon discrete Riccati solution by the structured doubling iteration.
/// Throws kNumerical when the pair is not stabilizable within the iteration budget.
Mat solve_dare(const Mat& a, const Mat& b, const Mat& q, const Mat& r, int max_iter = 200, double tol = 1e-12);
/// Discrete Lyapunov solution X = A^T X A + Q through the Kronecker linear system.
Mat solve_dlyap(const Mat& a, const Mat& q);

/// Closed-loop global matrix A + B K for per-robot gains.
Mat closed_loop_global(const Topology& topo, const std::vector<Linearization>& lin, const std::vector<Mat>& k);
/// Certifies that per-robot gains stabilize the stacked linearization. Throws
/// kNumerical with the radius found when the closed loop is not Schur (teams
/// up to kStackedMaxRobots; larger teams are returned uncertified).
StabilizingGains certify_gains(const Topology& topo, const std::vector<Linearization>& lin, std::vector<Mat> k);
/// Block-local LQR on each robot's own block. The own-state weight sums the
/// own block of Q_l over every robot l that observes robot i.
StabilizingGains synthesize_gains(const Topology& topo, const std::vector<Linearization>& lin,
                                  const ObjectiveSpec& spec);

/// Q_i + K_i^T R_i K_i, optionally with barrier curvature terms added by the caller.
Mat closed_loop_weight(const Mat& q, const Mat2& r, const Mat& k);

enum class TerminalMethod {
  kBlockLmi,     ///< block-diagonal P from the stacked matrix inequality; Gamma_i is the local residual
  kZeroGamma,    ///< Gamma_i = 0, least-squares solve of the local equation (exact only when consistent)
  kOwnBlock,     ///< P_i = own block of Q_i
  kLocalLyap,    ///< P_i from the own-block Lyapunov equation; cheap fallback for large teams
  kStateWeight,  ///< P_i = own block of Q_i (uncertified; needs the state weights)
};

TerminalMethod parse_terminal_method(const std::string& s);
std::string to_string(TerminalMethod m);

struct TerminalPenalty {
  std::vector<Mat4> p;
  std::vector<Mat> gamma;    ///< 4|N_i| x 4|N_i|
  double residual = 0.0;     ///< stacked Frobenius residual of the local equations
  double gamma_max_eig = 0.0;  ///< largest eigenvalue of sum_i W_i^T Gamma_i W_i
  bool certified = false;    ///< gamma_max_eig <= 0 and every P_i positive definite
  TerminalMethod method = TerminalMethod::kBlockLmi;  ///< method actually used
  int iterations = 0;
};


struct TerminalOptions {
  TerminalMethod method = TerminalMethod::kBlockLmi;
  int max_iter = 6000;
  /// Stop once the stacked inequality holds with this margin (relative to beta * lambda_min(Qbar)).
  double margin = 1e-3;
  double p_floor = 1.0;
  double step = 2.0;
};

/// Terminal penalty for the given closed-loop weights Qbar_i (which may already
/// include barrier curvature terms). `state_weights` holds Q_i and is only read by kStateWeight.
TerminalPenalty terminal_penalty(const Topology& topo, const std::vector<Mat>& f, const std::vector<Mat>& qbar,
                                 double beta, const TerminalOptions& opt,
                                 const std::vector<Mat>* state_weights = nullptr);
/// Convenience overload: F_i = A_N + B_i K_i and Qbar_i = Q_i + K_i^T R_i K_i.
TerminalPenalty terminal_penalty(const Topology& topo, const std::vector<Linearization>& lin,
                                 const StabilizingGains& gains, const ObjectiveSpec& spec,
                                 const TerminalOptions& opt);
/// Local residual F^T P F - Pbar + beta Qbar - Gamma for one robot.
Mat lyapunov_residual(const Mat& f, const Mat4& p, int own, const Mat& qbar, double beta, const Mat& gamma);

/// Result of the sampled nonlinearity margin test.
struct MarginReport {
  bool pass = false;
  double lipschitz = 0.0;  ///< sampled sup ||phi(e)|| / ||e||
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;     ///< rhs - lhs
};

/// Samples the linearization error phi_i(e) = e_i^+(e, K e) - F_i e inside a
/// ball of the given radius and checks ||P|| L^2 + 2 ||P F|| L < (beta - 1) lambda_min(Qbar).
MarginReport nonlinearity_margin(const LocalModel& model, const Mat& k, const Mat4& p, const Mat& f,
                                 const Mat& qbar, double beta, double radius, double v_r, double omega_r, double dt,
                                 int samples, std::uint64_t seed);
/// Largest radius (halving from r0) for which the margin test passes, or 0.
double terminal_radius(const LocalModel& model, const Mat& k, const Mat4& p, const Mat& f, const Mat& qbar,
                       double beta, double r0, double v_r, double omega_r, double dt, int samples,
                       std::uint64_t seed);

/// sum_i (||e_i^+||_P^2 - ||e_i||_P^2 + beta ||e_N||_Qbar^2) under u_i = K_i e_N
/// on the nonlinear model; non-positive inside a valid terminal region.
double terminal_descent(const Topology& topo, const std::vector<Mat>& k, const std::vector<Mat4>& p,
                        const std::vector<Mat>& qbar, double beta, const Field& e, double v_r, double omega_r,
                        double dt);

}  // namespace dlpc
