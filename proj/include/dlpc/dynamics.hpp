#pragma once

#include "dlpc/common.hpp"
#include "dlpc/topology.hpp"

#include <vector>

namespace dlpc {

/// Planar unicycle state with velocity as a state: (px, py, theta, v).
struct RobotState {
  double px = 0.0;
  double py = 0.0;
  double theta = 0.0;
  double v = 0.0;

  Vec4 vec() const { return Vec4(px, py, theta, v); }
  static RobotState from(const Vec4& q) { return {q(0), q(1), q(2), q(3)}; }
  Vec2 position() const { return Vec2(px, py); }
};

/// Validates a state and wraps its heading into (-pi, pi].
RobotState ingest_state(const RobotState& s);

/// Reference broadcast by the virtual leader: its state plus feedforward yaw
/// rate and acceleration.
struct LeaderSignal {
  RobotState q;
  double omega = 0.0;
  double accel = 0.0;
};

/// One explicit Euler step of the unicycle kinematics.
RobotState integrate_unicycle(const RobotState& s, double omega, double accel, double dt);

/// Physical yaw rate and acceleration realized by a control input u.
inline Vec2 physical_command(const LeaderSignal& leader, const Vec2& u) {
  return Vec2(leader.omega - u(0), leader.accel - u(1));
}

/// Body-frame formation error of robot i from absolute states of all robots.
Vec4 formation_error(const Topology& topo, const std::vector<RobotState>& states, const LeaderSignal& leader,
                     int i);
/// Formation errors of all robots as a 4 x M field.
Field formation_errors(const Topology& topo, const std::vector<RobotState>& states, const LeaderSignal& leader);

/// Discrete local formation error model of one robot,
/// e_i(k+1) = f_i(e_N(k)) + g_i(e_i(k)) u_i(k), on the stacked neighborhood
/// error in topology order.
class LocalModel {
 public:
  LocalModel() = default;
  LocalModel(const Topology& topo, int robot);
  LocalModel(int neighbors, int own, int pinned_gain);

  int size() const { return nn_; }
  int own() const { return own_; }
  int degree() const { return nn_ - 1; }
  int pin() const { return s_; }

  /// Full one-step prediction.
  Vec4 step(const Vec& e_nbr, const Vec2& u, double v_r, double omega_r, double dt) const;
  /// Drift term f_i (the prediction with u = 0).
  Vec4 drift(const Vec& e_nbr, double v_r, double omega_r, double dt) const;
  /// Input map g_i, which depends on the robot's own error only.
  static Mat42 input_map(const Vec4& e_own, double dt);
  /// Jacobian of the full prediction with respect to the neighborhood error at fixed u.
  Mat state_jacobian(const Vec& e_nbr, const Vec2& u, double v_r, double omega_r, double dt) const;
  /// Jacobian of the drift term alone.
  Mat drift_jacobian(const Vec& e_nbr, double v_r, double omega_r, double dt) const;

 private:
  int nn_ = 1;
  int own_ = 0;
  int s_ = 0;
};

/// Next error of robot i from its neighborhood error, input and the leader's
/// speed and yaw rate (a convenience wrapper over LocalModel::step).
Vec4 step_error_dynamics(const Topology& topo, int i, const Vec& e_nbr, const Vec2& u, const LeaderSignal& leader,
                         double dt);

/// Linearization of one robot's model at the origin.
struct Linearization {
  Mat a;  ///< 4 x 4|N_i|
  Mat b;  ///< 4 x 2
};

/// A_N = df_i/de_N at 0 and B_i = g_i(0) for every robot at leader speed v_r.
std::vector<Linearization> linearize_origin(const Topology& topo, double v_r, double omega_r, double dt);

/// Assembles the stacked 4M x 4M matrix of a per-robot block-row family,
/// e.g. global A from the local A_N blocks.
Mat assemble_global(const Topology& topo, const std::vector<Mat>& block_rows);
/// Stacked global input matrix (4M x 2M).
Mat assemble_global_input(const Topology& topo, const std::vector<Linearization>& lin);

}  // namespace dlpc
