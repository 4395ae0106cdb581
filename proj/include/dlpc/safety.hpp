#pragma once

#include "dlpc/common.hpp"
#include "dlpc/dynamics.hpp"
#include "dlpc/topology.hpp"

#include <string>
#include <vector>

namespace dlpc {

/// Scalar relaxed log barrier on a slack s > 0: -log(s) for s >= kappa and the
/// quadratic extension matching value, slope and curvature at kappa otherwise.
struct RelaxedLog {
  double kappa = 0.1;

  double value(double s) const;
  double d1(double s) const;
  double d2(double s) const;
};

/// Componentwise box |z_k - c_k| <= b_k on a control vector with the relaxed,
/// recentered log barrier sum_k -log(b_k - z_k) - log(b_k + z_k) + 2 log b_k.
struct BoxBarrier {
  Vec2 bound = Vec2(5.0, 5.0);
  double kappa = 0.1;

  double value(const Vec2& z) const;
  Vec2 grad(const Vec2& z) const;
  Mat2 hess(const Vec2& z) const;
  /// Analytic curvature bound at the relaxation switch, used by the safe terminal penalty.
  Mat2 switch_hessian() const;
  bool violated(const Vec2& z) const;
};

struct Obstacle {
  Vec2 center = Vec2::Zero();
  double radius = 0.2;  ///< minimum admissible distance d from the center
};

/// Distance-type state constraints Xi = d - ||p - c|| <= 0 for one robot.
/// The barrier is the relaxed log of the slack s = ||p - c|| - d recentered
/// on the sphere s = activation. It is C1 and vanishes identically for
/// s >= activation.
struct DistanceBarrier {
  double kappa = 0.1;
  double activation = 2.0;

  double value(double slack) const;
  double d1(double slack) const;
  double d2(double slack) const;
};

/// All state constraints seen by one robot: static obstacles plus any other
/// robot positions (inter-robot separation with radius `separation`).
struct StateConstraints {
  std::vector<Obstacle> obstacles;
  DistanceBarrier barrier;
  double separation = 0.2;

  bool empty() const { return obstacles.empty(); }
  /// Barrier value and position gradient/Hessian at p given the other robots' positions.
  double eval(const Vec2& p, const std::vector<Vec2>& others, Vec2* grad, Mat2* hess) const;
  /// Largest constraint function value max_j Xi_j(p) (> 0 means violated).
  double max_violation(const Vec2& p, const std::vector<Vec2>& others) const;
  /// Constraint functions for logging, obstacles first.
  std::vector<double> constraint_values(const Vec2& p, const std::vector<Vec2>& others) const;
};

/// Local inverse of the formation error map for robot i:
/// p_i = (C_i - R(theta_r - e_theta) e_xy) / (d_i + s_i).
struct PositionAnchor {
  Vec2 c = Vec2::Zero();
  double theta_r = 0.0;
  double gain = 1.0;

  Vec2 position(const Vec4& e) const;
  /// 2 x 4 Jacobian of position with respect to e_i.
  Eigen::Matrix<double, 2, 4> jacobian(const Vec4& e) const;
};

/// Anchor of robot i from neighbor and leader positions.
PositionAnchor make_anchor(const Topology& topo, int i, const std::vector<RobotState>& states,
                           const LeaderSignal& leader);

/// Gradient of the state barrier of robot i with respect to its neighborhood
/// error (only the own block is nonzero since neighbor positions are measured).
Vec state_barrier_gradient(const StateConstraints& sc, const PositionAnchor& anchor, const Vec4& e_own,
                           const std::vector<Vec2>& others, int own, int nn, double* value = nullptr);
/// Analytic curvature bound of the state barrier in error coordinates at the
/// relaxation switch: (1/kappa^2) on the position rows of the own block.
Mat state_switch_hessian(const StateConstraints& sc, int own, int nn, double gain);

/// Full safety configuration shared by all robots.
struct SafetySpec {
  bool enabled = false;
  double mu = 0.02;
  StateConstraints state;
  BoxBarrier control;
  /// Which other robots enter robot i's state constraints: "none", "neighbors" or "all".
  std::string pairs = "none";
};

/// Other-robot positions robot i must keep clear of under the pair policy.
std::vector<Vec2> pair_positions(const SafetySpec& spec, const Topology& topo, int i,
                                 const std::vector<RobotState>& states);

/// Barrier feature grad B_e of robot i on its neighborhood error, given the
/// physical states the anchors are built from. Returns zeros when no state
/// constraint applies or no states are available.
Vec state_barrier_feature(const SafetySpec& spec, const Topology& topo, int i, const Vec& e_nbr,
                          const std::vector<RobotState>* states, const LeaderSignal& leader, double* value = nullptr);

/// r + mu (B_e + B_u).
double safe_stage_cost(double stage, double barrier_state, double barrier_control, double mu);

/// Safe learning-rate monitors.
struct SafeRates {
  double gc1 = 0.4;
  double gc2 = 1e-5;
  double ga1 = 0.2;
  double ga2 = 0.1;
  double ga3 = 0.1;
};

/// Cbar_c = gc1 Gamma(sigma) + gc2 Gamma(grad B_e); Cbar_a = lambda_max(Rtilde)(ga1|sigma_a|^2 + ga2|grad B_e|^2 + ga3|grad B_nu|^2).
struct SafeMonitor {
  double cc = 0.0;
  double ca = 0.0;
};
SafeMonitor safe_rate_monitor(const SafeRates& rates, const Vec& sigma_c, const Vec& sigma_c_next,
                              const Vec& grad_be, const Vec& grad_be_next, double jac_norm, const Vec& sigma_a,
                              const Vec2& grad_bnu, const Mat2& r_tilde);

/// Gradients of the safe critic loss |eps|^2 with respect to the barrier block
/// W2, and of the safe actor loss with respect to one feature block.
Mat safe_critic_block_gradient(const Vec& h, const Vec& h_next, const Vec& eps, const Mat& a_stack, bool full);
Mat safe_actor_block_gradient(const Vec& h, const Vec2& eps, const Mat2& r_tilde);

/// Qbar_H = mu (H_e + K^T H_u K) + Q + K^T R K for the safe terminal penalty.
Mat safe_closed_loop_weight(const Mat& q, const Mat2& r, const Mat& k, const Mat& h_e, const Mat2& h_u, double mu);

}  // namespace dlpc
