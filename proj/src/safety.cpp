#include "dlpc/safety.hpp"

#include <algorithm>
#include <cmath>

namespace dlpc {

double RelaxedLog::value(double s) const {
  if (s >= kappa) return -std::log(s);
  const double t = (s - 2.0 * kappa) / kappa;
  return 0.5 * (t * t - 1.0) - std::log(kappa);
}

double RelaxedLog::d1(double s) const {
  if (s >= kappa) return -1.0 / s;
  return (s - 2.0 * kappa) / (kappa * kappa);
}

double RelaxedLog::d2(double s) const {
  if (s >= kappa) return 1.0 / (s * s);
  return 1.0 / (kappa * kappa);
}

double BoxBarrier::value(const Vec2& z) const {
  const RelaxedLog r{kappa};
  double v = 0.0;
  for (int k = 0; k < 2; ++k) v += r.value(bound(k) - z(k)) + r.value(bound(k) + z(k)) - 2.0 * r.value(bound(k));
  return v;
}

Vec2 BoxBarrier::grad(const Vec2& z) const {
  const RelaxedLog r{kappa};
  Vec2 g;
  for (int k = 0; k < 2; ++k) g(k) = -r.d1(bound(k) - z(k)) + r.d1(bound(k) + z(k));
  return g;
}

Mat2 BoxBarrier::hess(const Vec2& z) const {
  const RelaxedLog r{kappa};
  Mat2 h = Mat2::Zero();
  for (int k = 0; k < 2; ++k) h(k, k) = r.d2(bound(k) - z(k)) + r.d2(bound(k) + z(k));
  return h;
}

Mat2 BoxBarrier::switch_hessian() const {
  Mat2 h = Mat2::Zero();
  for (int k = 0; k < 2; ++k) {
    const double far = 2.0 * bound(k) - kappa;
    h(k, k) = 1.0 / (kappa * kappa) + 1.0 / (far * far);
  }
  return h;
}

bool BoxBarrier::violated(const Vec2& z) const {
  return std::abs(z(0)) > bound(0) || std::abs(z(1)) > bound(1);
}

double DistanceBarrier::value(double s) const {
  if (s >= activation) return 0.0;
  const RelaxedLog r{kappa};
  return r.value(s) - r.value(activation) - r.d1(activation) * (s - activation);
}

double DistanceBarrier::d1(double s) const {
  if (s >= activation) return 0.0;
  const RelaxedLog r{kappa};
  return r.d1(s) - r.d1(activation);
}

double DistanceBarrier::d2(double s) const {
  if (s >= activation) return 0.0;
  const RelaxedLog r{kappa};
  return r.d2(s);
}

namespace {

/// Adds the barrier of one distance constraint ||p - c|| >= d to value/grad/hess.
void add_distance_term(const DistanceBarrier& b, const Vec2& p, const Vec2& c, double d, double& value, Vec2* grad,
                       Mat2* hess) {
  const Vec2 diff = p - c;
  const double dist = diff.norm();
  const double slack = dist - d;
  if (slack >= b.activation) return;
  value += b.value(slack);
  if (dist < 1e-12) return;
  const Vec2 n = diff / dist;
  const double g1 = b.d1(slack);
  if (grad) *grad += g1 * n;
  if (hess) *hess += b.d2(slack) * n * n.transpose() + g1 / dist * (Mat2::Identity() - n * n.transpose());
}

}  // namespace

double StateConstraints::eval(const Vec2& p, const std::vector<Vec2>& others, Vec2* grad, Mat2* hess) const {
  double v = 0.0;
  if (grad) grad->setZero();
  if (hess) hess->setZero();
  for (const auto& o : obstacles) add_distance_term(barrier, p, o.center, o.radius, v, grad, hess);
  for (const auto& q : others) add_distance_term(barrier, p, q, separation, v, grad, hess);
  return v;
}

double StateConstraints::max_violation(const Vec2& p, const std::vector<Vec2>& others) const {
  double m = -1e300;
  for (double x : constraint_values(p, others)) m = std::max(m, x);
  return m;
}

std::vector<double> StateConstraints::constraint_values(const Vec2& p, const std::vector<Vec2>& others) const {
  std::vector<double> out;
  out.reserve(obstacles.size() + others.size());
  for (const auto& o : obstacles) out.push_back(o.radius - (p - o.center).norm());
  for (const auto& q : others) out.push_back(separation - (p - q).norm());
  return out;
}

Vec2 PositionAnchor::position(const Vec4& e) const {
  const double th = theta_r - e(2);
  const double c = std::cos(th);
  const double s = std::sin(th);
  const Vec2 rot(c * e(0) - s * e(1), s * e(0) + c * e(1));
  return (this->c - rot) / gain;
}

Eigen::Matrix<double, 2, 4> PositionAnchor::jacobian(const Vec4& e) const {
  const double th = theta_r - e(2);
  const double c = std::cos(th);
  const double s = std::sin(th);
  Eigen::Matrix<double, 2, 4> j = Eigen::Matrix<double, 2, 4>::Zero();
  j(0, 0) = -c;
  j(0, 1) = s;
  j(1, 0) = -s;
  j(1, 1) = -c;
  // d/d e_theta of -R(theta_r - e_theta) e_xy equals R'(theta) e_xy.
  j(0, 2) = -s * e(0) - c * e(1);
  j(1, 2) = c * e(0) - s * e(1);
  return j / gain;
}

PositionAnchor make_anchor(const Topology& topo, int i, const std::vector<RobotState>& states,
                           const LeaderSignal& leader) {
  PositionAnchor a;
  a.theta_r = leader.q.theta;
  a.gain = topo.degree(i) + topo.pin(i);
  for (int j : topo.neighbors(i)) {
    if (j == i) continue;
    a.c += states[j].position() + topo.edge_offset(i, j);
  }
  if (topo.pinned(i)) a.c += leader.q.position() + topo.leader_offset(i);
  return a;
}

Vec state_barrier_gradient(const StateConstraints& sc, const PositionAnchor& anchor, const Vec4& e_own,
                           const std::vector<Vec2>& others, int own, int nn, double* value) {
  Vec g = Vec::Zero(4 * nn);
  const Vec2 p = anchor.position(e_own);
  Vec2 gp;
  const double v = sc.eval(p, others, &gp, nullptr);
  if (value) *value = v;
  g.segment<4>(4 * own) = anchor.jacobian(e_own).transpose() * gp;
  return g;
}

Mat state_switch_hessian(const StateConstraints& sc, int own, int nn, double gain) {
  Mat h = Mat::Zero(4 * nn, 4 * nn);
  if (sc.empty()) return h;
  const double k = sc.barrier.kappa;
  const double c = 1.0 / (k * k * gain * gain);
  h(4 * own + 0, 4 * own + 0) = c;
  h(4 * own + 1, 4 * own + 1) = c;
  return h;
}

std::vector<Vec2> pair_positions(const SafetySpec& spec, const Topology& topo, int i,
                                 const std::vector<RobotState>& states) {
  std::vector<Vec2> out;
  if (spec.pairs == "neighbors") {
    for (int j : topo.neighbors(i)) {
      if (j != i) out.push_back(states[j].position());
    }
  } else if (spec.pairs == "all") {
    for (int j = 0; j < topo.size(); ++j) {
      if (j != i) out.push_back(states[j].position());
    }
  }
  return out;
}

Vec state_barrier_feature(const SafetySpec& spec, const Topology& topo, int i, const Vec& e_nbr,
                          const std::vector<RobotState>* states, const LeaderSignal& leader, double* value) {
  const int own = topo.own_index(i);
  const int nn = static_cast<int>(topo.neighbors(i).size());
  if (!states || (spec.state.empty() && spec.pairs == "none")) {
    if (value) *value = 0.0;
    return Vec::Zero(4 * nn);
  }
  const PositionAnchor anchor = make_anchor(topo, i, *states, leader);
  const std::vector<Vec2> others = pair_positions(spec, topo, i, *states);
  return state_barrier_gradient(spec.state, anchor, e_nbr.segment<4>(4 * own), others, own, nn, value);
}

double safe_stage_cost(double stage, double barrier_state, double barrier_control, double mu) {
  return stage + mu * (barrier_state + barrier_control);
}

namespace {

double gamma_fn(const Vec& z, const Vec& zn, double fnorm) {
  return z.squaredNorm() - 2.0 * std::abs(z.dot(zn)) * fnorm + zn.squaredNorm() * fnorm * fnorm;
}

}  // namespace

SafeMonitor safe_rate_monitor(const SafeRates& rates, const Vec& sigma_c, const Vec& sigma_c_next,
                              const Vec& grad_be, const Vec& grad_be_next, double jac_norm, const Vec& sigma_a,
                              const Vec2& grad_bnu, const Mat2& r_tilde) {
  SafeMonitor m;
  m.cc = rates.gc1 * gamma_fn(sigma_c, sigma_c_next, jac_norm) + rates.gc2 * gamma_fn(grad_be, grad_be_next, jac_norm);
  m.ca = lambda_max_sym(r_tilde) *
         (rates.ga1 * sigma_a.squaredNorm() + rates.ga2 * grad_be.squaredNorm() + rates.ga3 * grad_bnu.squaredNorm());
  return m;
}

Mat safe_critic_block_gradient(const Vec& h, const Vec& h_next, const Vec& eps, const Mat& a_stack, bool full) {
  Mat g = -2.0 * h * eps.transpose();
  if (full) g += 2.0 * h_next * (a_stack * eps).transpose();
  return g;
}

Mat safe_actor_block_gradient(const Vec& h, const Vec2& eps, const Mat2& r_tilde) {
  return -2.0 * h * (r_tilde * eps).transpose();
}

Mat safe_closed_loop_weight(const Mat& q, const Mat2& r, const Mat& k, const Mat& h_e, const Mat2& h_u, double mu) {
  return mu * (h_e + k.transpose() * h_u * k) + q + k.transpose() * r * k;
}

}  // namespace dlpc
