#pragma once

#include "dlpc/common.hpp"
#include "dlpc/dynamics.hpp"
#include "dlpc/objective.hpp"
#include "dlpc/topology.hpp"

#include <string>
#include <vector>

namespace dlpc {

/// Control sequence of the whole team: controls[tau] is 2 x M.
using ControlPlan = std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>>;

struct OpenLoopOptions {
  int max_iter = 200;
  double grad_tol = 1e-10;
  double armijo = 1e-4;   ///< sufficient decrease constant
  double step0 = 1.0;     ///< first trial step of each line search
  double shrink = 0.5;
  bool linearized = false;  ///< optimize the linearization at the origin instead of the nonlinear model
  /// Optional componentwise projection box |u_k| <= bound_k (disabled when non-positive).
  Vec2 bound = Vec2::Zero();
};

struct OpenLoopResult {
  ControlPlan u;
  double cost = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

/// Cost of rolling out a plan from e0 under the leader preview: sum of stage
/// costs plus the terminal quadratic of every robot.
double plan_cost(const Topology& topo, const ObjectiveSpec& obj, const Field& e0, const ControlPlan& u,
                 const std::vector<LeaderSignal>& leader, double dt, bool linearized = false);
/// Adjoint gradient of plan_cost with respect to every control entry.
ControlPlan plan_gradient(const Topology& topo, const ObjectiveSpec& obj, const Field& e0, const ControlPlan& u,
                          const std::vector<LeaderSignal>& leader, double dt, bool linearized = false,
                          double* cost = nullptr);
/// Gradient descent with Armijo backtracking on the stacked control sequence.
OpenLoopResult solve_open_loop(const Topology& topo, const ObjectiveSpec& obj, const Field& e0,
                               const std::vector<LeaderSignal>& leader, double dt, const OpenLoopOptions& opt,
                               const ControlPlan* warm = nullptr);
/// Zero plan of the right shape.
ControlPlan zero_plan(int horizon, int robots);
/// Shifts a plan by one step and fills the tail with K_i e_N(k+N|k) from the predicted terminal state.
ControlPlan shift_plan(const Topology& topo, const ControlPlan& u, const Field& e0,
                       const std::vector<LeaderSignal>& leader, double dt, const std::vector<Mat>& gains);

enum class EnvelopeMode {
  kGeometric,    ///< J^b(k) = scale * J0 * rho^k
  kShiftedTail,  ///< J^b(k) is the cost of the shifted baseline plan
};
EnvelopeMode parse_envelope_mode(const std::string& s);
std::string to_string(EnvelopeMode m);

/// Monotone upper bound the learned cost must stay under.
class Envelope {
 public:
  Envelope() = default;
  Envelope(EnvelopeMode mode, double rho, double scale);

  EnvelopeMode mode() const { return mode_; }
  bool initialized() const { return init_; }
  /// Anchors the geometric envelope at J(e(0)).
  void reset(double j0);
  /// Bound for step k. For the shifted-tail mode this is the last value pushed.
  double bound(int k) const;
  /// Supplies the shifted-tail baseline cost for the current step.
  void push(double jb);
  double rho() const { return rho_; }
  double scale() const { return scale_; }

 private:
  EnvelopeMode mode_ = EnvelopeMode::kGeometric;
  double rho_ = 0.97;
  double scale_ = 1.0;
  double j0_ = 0.0;
  double last_ = 0.0;
  bool init_ = false;
};

/// J(e(k)) <= J^b(k).
bool stability_check(double j, double jb);
/// Distributed relaxation J_i <= J_i^b + eta_i for every robot with sum eta_i <= 0.
bool distributed_stability_check(const std::vector<double>& j, const std::vector<double>& jb,
                                 const std::vector<double>& eta);

}  // namespace dlpc
