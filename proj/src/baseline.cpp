#include "dlpc/baseline.hpp"

#include <cmath>
#include <numeric>

namespace dlpc {

namespace {

using Plan2 = Eigen::Matrix<double, 2, Eigen::Dynamic>;

struct Forward {
  std::vector<Field> e;       ///< e[tau], tau = 0..N
  std::vector<std::vector<Mat>> jac;  ///< jac[tau][i]
  double cost = 0.0;
};

/// Rolls a plan forward, optionally keeping the per-step state Jacobians.
Forward forward(const Topology& topo, const ObjectiveSpec& obj, const Field& e0, const ControlPlan& u,
                const std::vector<LeaderSignal>& leader, double dt, bool linearized, bool keep_jac) {
  const int m = topo.size();
  const int horizon = static_cast<int>(u.size());
  require(static_cast<int>(leader.size()) >= horizon, ErrorKind::kInvalidArgument,
          "leader preview shorter than the plan");
  Forward fw;
  fw.e.assign(horizon + 1, Field(4, m));
  fw.e[0] = e0;
  if (keep_jac) fw.jac.assign(horizon, std::vector<Mat>(m));
  std::vector<LocalModel> models;
  models.reserve(m);
  for (int i = 0; i < m; ++i) models.emplace_back(topo, i);
  std::vector<Linearization> lin;
  if (linearized) lin = linearize_origin(topo, leader[0].q.v, leader[0].omega, dt);
  Vec en;
  for (int t = 0; t < horizon; ++t) {
    const LeaderSignal& l = leader[t];
    for (int i = 0; i < m; ++i) {
      topo.gather(i, fw.e[t], en);
      const Vec2 ui = u[t].col(i);
      fw.cost += stage_cost(en, ui, obj.robots[i].q, obj.robots[i].r);
      if (linearized) {
        fw.e[t + 1].col(i) = lin[i].a * en + lin[i].b * ui;
        if (keep_jac) fw.jac[t][i] = lin[i].a;
      } else {
        fw.e[t + 1].col(i) = models[i].step(en, ui, l.q.v, l.omega, dt);
        if (keep_jac) fw.jac[t][i] = models[i].state_jacobian(en, ui, l.q.v, l.omega, dt);
      }
    }
  }
  for (int i = 0; i < m; ++i) {
    const Vec4 ei = fw.e[horizon].col(i);
    fw.cost += ei.dot(obj.robots[i].p * ei);
  }
  return fw;
}

double plan_dot(const ControlPlan& a, const ControlPlan& b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += (a[t].array() * b[t].array()).sum();
  return s;
}

void project(ControlPlan& u, const Vec2& bound) {
  for (auto& ut : u) {
    for (int k = 0; k < 2; ++k) {
      if (bound(k) > 0.0) ut.row(k) = ut.row(k).cwiseMax(-bound(k)).cwiseMin(bound(k));
    }
  }
}

}  // namespace

ControlPlan zero_plan(int horizon, int robots) { return ControlPlan(horizon, Plan2::Zero(2, robots)); }

double plan_cost(const Topology& topo, const ObjectiveSpec& obj, const Field& e0, const ControlPlan& u,
                 const std::vector<LeaderSignal>& leader, double dt, bool linearized) {
  return forward(topo, obj, e0, u, leader, dt, linearized, false).cost;
}

ControlPlan plan_gradient(const Topology& topo, const ObjectiveSpec& obj, const Field& e0, const ControlPlan& u,
                          const std::vector<LeaderSignal>& leader, double dt, bool linearized, double* cost) {
  const int m = topo.size();
  const int horizon = static_cast<int>(u.size());
  const Forward fw = forward(topo, obj, e0, u, leader, dt, linearized, true);
  if (cost) *cost = fw.cost;
  ControlPlan g = zero_plan(horizon, m);
  // Adjoint p[tau] = dJ/de(tau), stored per robot column.
  Field p(4, m);
  for (int i = 0; i < m; ++i) p.col(i) = 2.0 * obj.robots[i].p * fw.e[horizon].col(i);
  Field pn(4, m);
  Vec en;
  for (int t = horizon - 1; t >= 0; --t) {
    pn.setZero();
    for (int i = 0; i < m; ++i) {
      topo.gather(i, fw.e[t], en);
      const Vec2 ui = u[t].col(i);
      const Vec4 ei = fw.e[t].col(i);
      const Mat42 gi = linearized ? LocalModel::input_map(Vec4::Zero(), dt) : LocalModel::input_map(ei, dt);
      g[t].col(i) = 2.0 * obj.robots[i].r * ui + gi.transpose() * p.col(i);
      const Vec lam = 2.0 * obj.robots[i].q * en + fw.jac[t][i].transpose() * p.col(i);
      const auto& l = topo.neighbors(i);
      for (std::size_t a = 0; a < l.size(); ++a) pn.col(l[a]) += lam.segment<4>(4 * a);
    }
    std::swap(p, pn);
  }
  return g;
}

OpenLoopResult solve_open_loop(const Topology& topo, const ObjectiveSpec& obj, const Field& e0,
                               const std::vector<LeaderSignal>& leader, double dt, const OpenLoopOptions& opt,
                               const ControlPlan* warm) {
  const int m = topo.size();
  OpenLoopResult res;
  res.u = warm ? *warm : zero_plan(obj.horizon, m);
  require(static_cast<int>(res.u.size()) == obj.horizon, ErrorKind::kInvalidArgument, "warm start has wrong length");
  project(res.u, opt.bound);
  double j = 0.0;
  ControlPlan g = plan_gradient(topo, obj, e0, res.u, leader, dt, opt.linearized, &j);
  require(std::isfinite(j), ErrorKind::kNumerical, "non-finite open-loop cost");
  double step = opt.step0;
  for (int it = 0; it < opt.max_iter; ++it) {
    const double gn = std::sqrt(plan_dot(g, g));
    res.grad_norm = gn;
    if (gn <= opt.grad_tol) break;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      ControlPlan trial = res.u;
      for (std::size_t t = 0; t < trial.size(); ++t) trial[t] -= step * g[t];
      project(trial, opt.bound);
      ControlPlan diff = res.u;
      for (std::size_t t = 0; t < diff.size(); ++t) diff[t] -= trial[t];
      const double jt = plan_cost(topo, obj, e0, trial, leader, dt, opt.linearized);
      if (std::isfinite(jt) && jt <= j - opt.armijo * plan_dot(g, diff)) {
        res.u = std::move(trial);
        j = jt;
        accepted = true;
        break;
      }
      step *= opt.shrink;
    }
    res.iterations = it + 1;
    if (!accepted) break;
    g = plan_gradient(topo, obj, e0, res.u, leader, dt, opt.linearized, &j);
    step = std::min(opt.step0, step / opt.shrink);
  }
  res.cost = j;
  return res;
}

ControlPlan shift_plan(const Topology& topo, const ControlPlan& u, const Field& e0,
                       const std::vector<LeaderSignal>& leader, double dt, const std::vector<Mat>& gains) {
  const int m = topo.size();
  const int horizon = static_cast<int>(u.size());
  ControlPlan out(u.begin() + 1, u.end());
  // Predicted terminal state of the current plan under the nonlinear model.
  Field e = e0;
  Field en_f(4, m);
  Vec en;
  for (int t = 0; t < horizon; ++t) {
    for (int i = 0; i < m; ++i) {
      topo.gather(i, e, en);
      en_f.col(i) = LocalModel(topo, i).step(en, u[t].col(i), leader[t].q.v, leader[t].omega, dt);
    }
    e = en_f;
  }
  Plan2 tail(2, m);
  for (int i = 0; i < m; ++i) {
    topo.gather(i, e, en);
    tail.col(i) = gains[i] * en;
  }
  out.push_back(tail);
  return out;
}

EnvelopeMode parse_envelope_mode(const std::string& s) {
  if (s == "geometric") return EnvelopeMode::kGeometric;
  if (s == "shifted_tail") return EnvelopeMode::kShiftedTail;
  fail(ErrorKind::kConfig, "unknown envelope mode '" + s + "'");
}

std::string to_string(EnvelopeMode m) { return m == EnvelopeMode::kGeometric ? "geometric" : "shifted_tail"; }

Envelope::Envelope(EnvelopeMode mode, double rho, double scale) : mode_(mode), rho_(rho), scale_(scale) {
  require(rho > 0.0 && rho < 1.0, ErrorKind::kConfig, "envelope ratio must lie in (0, 1)");
  require(scale >= 1.0, ErrorKind::kConfig, "envelope scale must be at least 1");
}

void Envelope::reset(double j0) {
  j0_ = j0;
  last_ = j0;
  init_ = true;
}

double Envelope::bound(int k) const {
  if (mode_ == EnvelopeMode::kShiftedTail) return last_;
  return scale_ * j0_ * std::pow(rho_, k);
}

void Envelope::push(double jb) {
  last_ = jb;
  init_ = true;
}

bool stability_check(double j, double jb) { return j <= jb; }

bool distributed_stability_check(const std::vector<double>& j, const std::vector<double>& jb,
                                 const std::vector<double>& eta) {
  require(j.size() == jb.size() && j.size() == eta.size(), ErrorKind::kInvalidArgument,
          "distributed check needs one entry per robot");
  if (std::accumulate(eta.begin(), eta.end(), 0.0) > 0.0) return false;
  for (std::size_t i = 0; i < j.size(); ++i)
    if (j[i] > jb[i] + eta[i]) return false;
  return true;
}

}  // namespace dlpc
