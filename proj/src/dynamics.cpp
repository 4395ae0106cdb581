#include "dlpc/dynamics.hpp"

#include <cmath>
#include <string>

namespace dlpc {

RobotState ingest_state(const RobotState& s) {
  require(std::isfinite(s.px) && std::isfinite(s.py) && std::isfinite(s.theta) && std::isfinite(s.v),
          ErrorKind::kInvalidArgument, "non-finite robot state");
  RobotState out = s;
  out.theta = wrap_angle(s.theta);
  return out;
}

RobotState integrate_unicycle(const RobotState& s, double omega, double accel, double dt) {
  RobotState n;
  n.px = s.px + dt * s.v * std::cos(s.theta);
  n.py = s.py + dt * s.v * std::sin(s.theta);
  n.theta = s.theta + dt * omega;
  n.v = s.v + dt * accel;
  return n;
}

Vec4 formation_error(const Topology& topo, const std::vector<RobotState>& states, const LeaderSignal& leader,
                     int i) {
  require(static_cast<int>(states.size()) == topo.size(), ErrorKind::kInvalidArgument,
          "formation error needs the state of every robot");
  const RobotState& qi = states[i];
  Vec2 acc = Vec2::Zero();
  for (int j : topo.neighbors(i)) {
    if (j == i) continue;
    acc += states[j].position() - qi.position() + topo.edge_offset(i, j);
  }
  if (topo.pinned(i)) acc += leader.q.position() - qi.position() + topo.leader_offset(i);
  const double c = std::cos(qi.theta);
  const double s = std::sin(qi.theta);
  Vec4 e;
  e(0) = c * acc(0) + s * acc(1);
  e(1) = -s * acc(0) + c * acc(1);
  e(2) = wrap_angle(leader.q.theta - qi.theta);
  e(3) = leader.q.v - qi.v;
  return e;
}

Field formation_errors(const Topology& topo, const std::vector<RobotState>& states, const LeaderSignal& leader) {
  Field f(4, topo.size());
  for (int i = 0; i < topo.size(); ++i) f.col(i) = formation_error(topo, states, leader, i);
  return f;
}

LocalModel::LocalModel(const Topology& topo, int robot)
    : nn_(static_cast<int>(topo.neighbors(robot).size())), own_(topo.own_index(robot)), s_(topo.pin(robot)) {}

LocalModel::LocalModel(int neighbors, int own, int pinned_gain) : nn_(neighbors), own_(own), s_(pinned_gain) {
  require(neighbors >= 1 && own >= 0 && own < neighbors, ErrorKind::kInvalidArgument, "bad local model shape");
}

Vec4 LocalModel::step(const Vec& e, const Vec2& u, double v_r, double omega_r, double dt) const {
  require(e.size() == 4 * nn_, ErrorKind::kInvalidArgument, "neighborhood error has wrong size");
  const Vec4 ei = e.segment<4>(4 * own_);
  const double omega_i = omega_r - u(0);
  const double v_i = v_r - ei(3);
  double sx = 0.0;
  double sy = 0.0;
  for (int a = 0; a < nn_; ++a) {
    if (a == own_) continue;
    const double th = ei(2) - e(4 * a + 2);
    const double vj = v_r - e(4 * a + 3);
    sx += vj * std::cos(th) - v_i;
    sy += vj * std::sin(th);
  }
  // Each relative-velocity term is grouped as a difference so the origin maps to exactly zero.
  Vec4 n;
  n(0) = ei(0) + dt * (omega_i * ei(1) + sx + s_ * (v_r * std::cos(ei(2)) - v_i));
  n(1) = ei(1) + dt * (-omega_i * ei(0) + sy + s_ * v_r * std::sin(ei(2)));
  n(2) = ei(2) + dt * u(0);
  n(3) = ei(3) + dt * u(1);
  return n;
}

Vec4 step_error_dynamics(const Topology& topo, int i, const Vec& e_nbr, const Vec2& u, const LeaderSignal& leader,
                         double dt) {
  return LocalModel(topo, i).step(e_nbr, u, leader.q.v, leader.omega, dt);
}

Vec4 LocalModel::drift(const Vec& e, double v_r, double omega_r, double dt) const {
  return step(e, Vec2::Zero(), v_r, omega_r, dt);
}

Mat42 LocalModel::input_map(const Vec4& ei, double dt) {
  Mat42 g;
  g << -ei(1), 0.0, ei(0), 0.0, 1.0, 0.0, 0.0, 1.0;
  return dt * g;
}

Mat LocalModel::state_jacobian(const Vec& e, const Vec2& u, double v_r, double omega_r, double dt) const {
  require(e.size() == 4 * nn_, ErrorKind::kInvalidArgument, "neighborhood error has wrong size");
  Mat jac = Mat::Zero(4, 4 * nn_);
  const Vec4 ei = e.segment<4>(4 * own_);
  const double omega_i = omega_r - u(0);
  const int o = 4 * own_;
  double dx_dth = -s_ * v_r * std::sin(ei(2));
  double dy_dth = s_ * v_r * std::cos(ei(2));
  for (int a = 0; a < nn_; ++a) {
    if (a == own_) continue;
    const double th = ei(2) - e(4 * a + 2);
    const double vj = v_r - e(4 * a + 3);
    const double c = std::cos(th);
    const double s = std::sin(th);
    dx_dth -= vj * s;
    dy_dth += vj * c;
    jac(0, 4 * a + 2) = dt * vj * s;
    jac(0, 4 * a + 3) = -dt * c;
    jac(1, 4 * a + 2) = -dt * vj * c;
    jac(1, 4 * a + 3) = -dt * s;
  }
  jac(0, o + 0) = 1.0;
  jac(0, o + 1) = dt * omega_i;
  jac(0, o + 2) = dt * dx_dth;
  jac(0, o + 3) = dt * (degree() + s_);
  jac(1, o + 0) = -dt * omega_i;
  jac(1, o + 1) = 1.0;
  jac(1, o + 2) = dt * dy_dth;
  jac(2, o + 2) = 1.0;
  jac(3, o + 3) = 1.0;
  return jac;
}

Mat LocalModel::drift_jacobian(const Vec& e, double v_r, double omega_r, double dt) const {
  return state_jacobian(e, Vec2::Zero(), v_r, omega_r, dt);
}

std::vector<Linearization> linearize_origin(const Topology& topo, double v_r, double omega_r, double dt) {
  std::vector<Linearization> out(topo.size());
  for (int i = 0; i < topo.size(); ++i) {
    LocalModel lm(topo, i);
    out[i].a = lm.drift_jacobian(Vec::Zero(topo.neighborhood_dim(i)), v_r, omega_r, dt);
    out[i].b = LocalModel::input_map(Vec4::Zero(), dt);
  }
  return out;
}

Mat assemble_global(const Topology& topo, const std::vector<Mat>& rows) {
  const int m = topo.size();
  Mat g = Mat::Zero(4 * m, 4 * m);
  for (int i = 0; i < m; ++i) {
    const auto& l = topo.neighbors(i);
    require(rows[i].rows() == 4 && rows[i].cols() == 4 * static_cast<int>(l.size()), ErrorKind::kInvalidArgument,
            "block row " + std::to_string(i) + " has wrong shape");
    for (std::size_t a = 0; a < l.size(); ++a) g.block<4, 4>(4 * i, 4 * l[a]) = rows[i].block<4, 4>(0, 4 * a);
  }
  return g;
}

Mat assemble_global_input(const Topology& topo, const std::vector<Linearization>& lin) {
  const int m = topo.size();
  Mat b = Mat::Zero(4 * m, 2 * m);
  for (int i = 0; i < m; ++i) b.block<4, 2>(4 * i, 2 * i) = lin[i].b;
  return b;
}

}  // namespace dlpc
