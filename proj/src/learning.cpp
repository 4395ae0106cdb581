#include "dlpc/learning.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dlpc {

Vec Basis::eval(const Vec& e) const {
  Vec out;
  eval(e, out);
  return out;
}

void Basis::eval(const Vec& e, Vec& out) const {
  const int nb = static_cast<int>(e.size()) / 4;
  out.resize(e.size());
  for (int b = 0; b < nb; ++b) out.segment<4>(4 * b) = (v * e.segment<4>(4 * b)).array().tanh().matrix();
}

Basis Basis::random(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat4 g;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) g(r, c) = n(rng);
  Eigen::HouseholderQR<Mat4> qr(g);
  Mat4 q = qr.householderQ();
  // Fix column signs so the factor is unique for a given draw.
  const Mat4 rr = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < 4; ++c)
    if (rr(c, c) < 0.0) q.col(c) = -q.col(c);
  Basis b;
  b.v = scale * q;
  return b;
}

double RobotNets::distance(const RobotNets& o) const {
  double d = (wc - o.wc).norm() + (wa - o.wa).norm();
  if (safe()) d += (wc2 - o.wc2).norm() + (wa2 - o.wa2).norm() + (wa3 - o.wa3).norm();
  return d;
}

CriticGradient parse_critic_gradient(const std::string& s) {
  if (s == "full") return CriticGradient::kFull;
  if (s == "semi") return CriticGradient::kSemi;
  fail(ErrorKind::kConfig, "unknown critic gradient mode '" + s + "' (expected full or semi)");
}

std::string to_string(CriticGradient g) { return g == CriticGradient::kFull ? "full" : "semi"; }

Mat neighborhood_jacobian(const Topology& topo, int i, const std::vector<Mat>& jac) {
  const auto& ni = topo.neighbors(i);
  const int n = static_cast<int>(ni.size());
  Mat a = Mat::Zero(4 * n, 4 * n);
  for (int r = 0; r < n; ++r) {
    const int j = ni[r];
    for (int c = 0; c < n; ++c) {
      const int lj = topo.local_index(j, ni[c]);
      if (lj < 0) continue;
      a.block<4, 4>(4 * r, 4 * c) = jac[j].block<4, 4>(0, 4 * lj);
    }
  }
  return a;
}

Vec costate_target(const Vec& e, const Mat& q, const Mat& a, const Vec& lambda_next, const Vec* barrier_grad,
                   double mu) {
  Vec t = 2.0 * q * e + a.transpose() * lambda_next;
  if (barrier_grad) t += mu * *barrier_grad;
  return t;
}

Vec2 action_target(const Mat42& g, const Vec4& costate_sum) { return -g.transpose() * costate_sum; }

Mat critic_gradient(const Vec& sigma, const Vec& sigma_next, const Vec& eps, const Mat& a, CriticGradient mode) {
  Mat g = -2.0 * sigma * eps.transpose();
  if (mode == CriticGradient::kFull) g += 2.0 * sigma_next * (a * eps).transpose();
  return g;
}

Mat actor_gradient(const Vec& sigma, const Vec2& eps, const Mat2& r) {
  return -2.0 * sigma * (2.0 * r * eps).transpose();
}

double gamma_c(const Vec& z, const Vec& zn, double fnorm) {
  return z.squaredNorm() - 2.0 * std::abs(z.dot(zn)) * fnorm + zn.squaredNorm() * fnorm * fnorm;
}

double ConvergenceMonitor::cc_max() const { return cc.empty() ? 0.0 : *std::max_element(cc.begin(), cc.end()); }
double ConvergenceMonitor::ca_max() const { return ca.empty() ? 0.0 : *std::max_element(ca.begin(), ca.end()); }

Vec2 Policy::action(int i, const Vec& e, const Vec* grad_be, const BoxBarrier* box) const {
  Vec sa;
  actor_basis.eval(e, sa);
  Vec2 u = wa[i].transpose() * sa;
  if (safe()) {
    if (grad_be) u += wa2[i].transpose() * *grad_be;
    if (box) u += wa3[i].transpose() * box->grad(u);
  }
  return u;
}

Policy deploy_policy(const Policy& src, const Topology& src_topo, int r, const Topology& target) {
  require(r >= 0 && r < src_topo.size(), ErrorKind::kInvalidArgument, "source robot out of range");
  const auto& nr = src_topo.neighbors(r);
  const int own = src_topo.own_index(r);
  require(nr.size() >= 2, ErrorKind::kInvalidArgument, "source robot has no neighbor block to replicate");
  const int other = own == 0 ? 1 : 0;
  const Mat w1 = src.wa[r].middleRows(4 * own, 4);
  const Mat w2 = src.wa[r].middleRows(4 * other, 4);
  Mat b1, b2;
  if (src.safe()) {
    b1 = src.wa2[r].middleRows(4 * own, 4);
    b2 = src.wa2[r].middleRows(4 * other, 4);
  }
  Policy out;
  out.actor_basis = src.actor_basis;
  out.wa.resize(target.size());
  if (src.safe()) {
    out.wa2.resize(target.size());
    out.wa3.assign(target.size(), src.wa3[r]);
  }
  for (int i = 0; i < target.size(); ++i) {
    const int n = static_cast<int>(target.neighbors(i).size());
    const int o = target.own_index(i);
    out.wa[i].resize(4 * n, 2);
    if (src.safe()) out.wa2[i].resize(4 * n, 2);
    for (int a = 0; a < n; ++a) {
      out.wa[i].middleRows(4 * a, 4) = a == o ? w1 : w2;
      if (src.safe()) out.wa2[i].middleRows(4 * a, 4) = a == o ? b1 : b2;
    }
  }
  return out;
}

namespace {

constexpr int kMaxHalvings = 60;

/// Largest singular value by power iteration on A^T A.
double power_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Vec x = Vec::Ones(a.cols()) / std::sqrt(static_cast<double>(a.cols()));
  double s = 0.0;
  for (int it = 0; it < 30; ++it) {
    Vec y = a.transpose() * (a * x);
    const double n = y.norm();
    if (n == 0.0) return 0.0;
    x = y / n;
    if (std::abs(n - s) <= 1e-12 * n) {
      s = n;
      break;
    }
    s = n;
  }
  return std::sqrt(s);
}

}  // namespace

/// Per-robot quantities of one time step of the predicted trajectory.
struct DistributedLearner::Work {
  std::vector<Vec> e;      ///< neighborhood errors
  std::vector<Vec> sa;     ///< actor features
  std::vector<Vec> sc;     ///< critic features
  std::vector<Vec> gbe;    ///< state barrier gradients (safe mode)
  std::vector<double> be;  ///< state barrier values (safe mode)

  void resize(int m) {
    e.resize(m);
    sa.resize(m);
    sc.resize(m);
    gbe.resize(m);
    be.resize(m);
  }
};

DistributedLearner::DistributedLearner(const Topology& topo, const ObjectiveSpec& objective,
                                       const LearnerConfig& config, const SafetySpec& safety, double dt)
    : topo_(topo), obj_(objective), cfg_(config), safety_(safety), dt_(dt), rng_(config.seed) {
  require(dt > 0.0, ErrorKind::kConfig, "time step must be positive");
  require(cfg_.gamma_c > 0.0 && cfg_.gamma_a > 0.0, ErrorKind::kConfig, "learning rates must be positive");
  require(cfg_.t_max >= 1, ErrorKind::kConfig, "t_max must be at least 1");
  require(cfg_.tol > 0.0, ErrorKind::kConfig, "tolerance must be positive");
  require(cfg_.init_hi >= cfg_.init_lo, ErrorKind::kConfig, "weight init range is empty");
  require(cfg_.retries >= 0, ErrorKind::kConfig, "retry budget must be non-negative");
  require(cfg_.basis_scale > 0.0, ErrorKind::kConfig, "basis scale must be positive");
  obj_.validate(topo_);
  const int m = topo_.size();
  models_.reserve(m);
  for (int i = 0; i < m; ++i) models_.emplace_back(topo_, i);
  basis_a_ = Basis::random(rng_, cfg_.basis_scale);
  basis_c_ = Basis::random(rng_, cfg_.basis_scale);
  if (safety_.enabled) {
    rate_c_.assign(m, cfg_.safe_rates.gc1);
    rate_a_.assign(m, cfg_.safe_rates.ga1);
  } else {
    rate_c_.assign(m, cfg_.gamma_c);
    rate_a_.assign(m, cfg_.gamma_a);
  }
  safe_rates_.assign(m, cfg_.safe_rates);
  halvings_.assign(m, 0);
  nets_.resize(m);
  reinitialize();
  reinit_count_ = 0;
}

void DistributedLearner::set_bases(const Basis& actor, const Basis& critic) {
  basis_a_ = actor;
  basis_c_ = critic;
}

void DistributedLearner::reinitialize() {
  std::uniform_real_distribution<double> u(cfg_.init_lo, cfg_.init_hi);
  auto fill = [&](Mat& w, int r, int c) {
    w.resize(r, c);
    for (int col = 0; col < c; ++col)
      for (int row = 0; row < r; ++row) w(row, col) = u(rng_);
  };
  for (int i = 0; i < topo_.size(); ++i) {
    const int n = topo_.neighborhood_dim(i);
    auto& w = nets_[i];
    fill(w.wc, n, n);
    fill(w.wa, n, 2);
    if (safety_.enabled) {
      // Barrier blocks start neutral so the initial policy is the nominal one.
      w.wc2 = Mat::Zero(n, n);
      w.wa2 = Mat::Zero(n, 2);
      w.wa3 = Mat::Zero(2, 2);
    } else {
      w.wc2.resize(0, 0);
      w.wa2.resize(0, 0);
      w.wa3.resize(0, 0);
    }
  }
  ++reinit_count_;
}

Policy DistributedLearner::policy() const {
  Policy p;
  p.actor_basis = basis_a_;
  for (const auto& n : nets_) {
    p.wa.push_back(n.wa);
    if (n.safe()) {
      p.wa2.push_back(n.wa2);
      p.wa3.push_back(n.wa3);
    }
  }
  return p;
}

void DistributedLearner::features(int i, const Vec& e, const std::vector<RobotState>* states,
                                  const LeaderSignal& leader, Vec& sa, Vec& sc, Vec& gbe,
                                  double* barrier_value) const {
  basis_a_.eval(e, sa);
  basis_c_.eval(e, sc);
  if (!safety_.enabled) return;
  gbe = state_barrier_feature(safety_, topo_, i, e, states, leader, barrier_value);
}

Vec2 DistributedLearner::actor_output(int i, const Vec& sa, const Vec& gbe, Vec2* nu, Vec2* gbnu) const {
  const auto& w = nets_[i];
  Vec2 u = w.wa.transpose() * sa;
  if (!w.safe()) {
    if (nu) *nu = u;
    if (gbnu) gbnu->setZero();
    return u;
  }
  u += w.wa2.transpose() * gbe;
  const Vec2 g = safety_.control.grad(u);
  if (nu) *nu = u;
  if (gbnu) *gbnu = g;
  return u + w.wa3.transpose() * g;
}

namespace {

void propagate_states(const std::vector<RobotState>& s, const std::vector<Vec2>& u, const LeaderSignal& l, double dt,
                      std::vector<RobotState>& out) {
  out.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec2 cmd = physical_command(l, u[i]);
    out[i] = integrate_unicycle(s[i], cmd(0), cmd(1), dt);
  }
}

}  // namespace

double DistributedLearner::sweep(const WorldSnapshot& world, ConvergenceMonitor& mon) {
  const int m = topo_.size();
  const int horizon = obj_.horizon;
  require(static_cast<int>(world.leader.size()) >= horizon + 1, ErrorKind::kInvalidArgument,
          "leader preview must cover the horizon");
  require(world.e.cols() == m, ErrorKind::kInvalidArgument, "error field has wrong robot count");
  const bool safe = safety_.enabled;
  const bool use_states = safe && static_cast<int>(world.states.size()) == m;
  if (static_cast<int>(mon.cc.size()) != m) {
    mon.cc.assign(m, 0.0);
    mon.ca.assign(m, 0.0);
  }
  const std::vector<RobotNets> before = nets_;

  Field e = world.e;
  Field e_next(4, m);
  std::vector<RobotState> states = world.states;
  std::vector<RobotState> states_next;
  Work cur;
  Work nxt;
  cur.resize(m);
  nxt.resize(m);
  std::vector<Vec2> u(m), gbnu(m);
  std::vector<Vec> lam(m), lam_next(m);
  std::vector<Mat> jac(m);
  const bool par = cfg_.parallel;

  // Features of the first step; later steps reuse the predicted features.
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    topo_.gather(i, e, cur.e[i]);
    features(i, cur.e[i], use_states ? &states : nullptr, world.leader[0], cur.sa[i], cur.sc[i], cur.gbe[i],
             &cur.be[i]);
  }

  for (int tau = 0; tau < horizon; ++tau) {
    const LeaderSignal& ld = world.leader[tau];
    const LeaderSignal& ln = world.leader[tau + 1];
    const bool terminal = tau == horizon - 1;

    // Read phase: actions, own critic outputs, one-step predictions and Jacobians.
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < m; ++i) {
      u[i] = actor_output(i, cur.sa[i], cur.gbe[i], nullptr, &gbnu[i]);
      lam[i] = nets_[i].wc.transpose() * cur.sc[i];
      if (safe) lam[i] += nets_[i].wc2.transpose() * cur.gbe[i];
      e_next.col(i) = models_[i].step(cur.e[i], u[i], ld.q.v, ld.omega, dt_);
      jac[i] = models_[i].state_jacobian(cur.e[i], u[i], ld.q.v, ld.omega, dt_);
    }
    if (use_states) propagate_states(states, u, ld, dt_, states_next);

    // Read phase: features and critic outputs at tau + 1.
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < m; ++i) {
      topo_.gather(i, e_next, nxt.e[i]);
      features(i, nxt.e[i], use_states ? &states_next : nullptr, ln, nxt.sa[i], nxt.sc[i], nxt.gbe[i], &nxt.be[i]);
      if (terminal) {
        lam_next[i] = Vec::Zero(nxt.e[i].size());
        const int o = topo_.own_index(i);
        lam_next[i].segment<4>(4 * o) = 2.0 * obj_.robots[i].p * nxt.e[i].segment<4>(4 * o);
      } else {
        lam_next[i] = nets_[i].wc.transpose() * nxt.sc[i];
        if (safe) lam_next[i] += nets_[i].wc2.transpose() * nxt.gbe[i];
      }
    }

    // Write phase: targets and local weight updates.
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < m; ++i) {
      const auto& ob = obj_.robots[i];
      const Mat a = neighborhood_jacobian(topo_, i, jac);
      const Vec lam_d = costate_target(cur.e[i], ob.q, a, lam_next[i], safe ? &cur.gbe[i] : nullptr, safety_.mu);
      const Vec eps_c = lam_d - lam[i];
      Vec4 cs = Vec4::Zero();
      for (int j : topo_.reverse(i)) cs += lam_next[j].segment<4>(4 * topo_.local_index(j, i));
      const Vec4 ei = cur.e[i].segment<4>(4 * topo_.own_index(i));
      const Vec2 u_d = action_target(LocalModel::input_map(ei, dt_), cs);
      Mat2 r_tilde = 2.0 * ob.r;
      Vec2 eps_a;
      if (safe) {
        r_tilde += safety_.mu * safety_.control.hess(u[i]);
        eps_a = u_d - (2.0 * ob.r * u[i] + safety_.mu * safety_.control.grad(u[i]));
      } else {
        eps_a = u_d - 2.0 * ob.r * u[i];
      }
      const CriticGradient mode = terminal ? CriticGradient::kSemi : cfg_.critic_gradient;
      const double fnorm = power_norm(a);
      auto& w = nets_[i];
      SafeRates& sr = safe_rates_[i];
      // Reported monitors use Gamma_c; the guard that triggers halving also bounds the
      // step actually taken, |h|^2 for the semi-gradient and lambda_max(Rtilde)^2 for the actor.
      const double lr = safe ? lambda_max_sym(r_tilde) : 2.0 * lambda_max_sym(ob.r);
      const double actor_factor = std::max(lr, lr * lr);
      auto critic_term = [&](const Vec& h, const Vec& hn) {
        const double g = gamma_c(h, hn, fnorm);
        return mode == CriticGradient::kSemi ? std::max(g, h.squaredNorm()) : g;
      };
      const double sc1 = critic_term(cur.sc[i], nxt.sc[i]);
      const double sc2 = safe ? critic_term(cur.gbe[i], nxt.gbe[i]) : 0.0;
      const double sa1 = cur.sa[i].squaredNorm();
      const double sa2 = safe ? cur.gbe[i].squaredNorm() : 0.0;
      const double sa3 = safe ? gbnu[i].squaredNorm() : 0.0;
      double cc;
      double ca;
      if (safe) {
        SafeRates eff = sr;
        eff.gc1 = rate_c_[i];
        eff.ga1 = rate_a_[i];
        const SafeMonitor sm = safe_rate_monitor(eff, cur.sc[i], nxt.sc[i], cur.gbe[i], nxt.gbe[i], fnorm, cur.sa[i],
                                                 gbnu[i], r_tilde);
        cc = sm.cc;
        ca = sm.ca;
      } else {
        cc = rate_c_[i] * gamma_c(cur.sc[i], nxt.sc[i], fnorm);
        ca = lr * rate_a_[i] * sa1;
      }
      if (cfg_.halve_on_violation) {
        // Halve the rate of the largest contribution until the guard holds again.
        bool halved = false;
        for (int h = 0; h < kMaxHalvings; ++h) {
          const double t1 = rate_c_[i] * sc1;
          const double t2 = safe ? sr.gc2 * sc2 : 0.0;
          if (t1 + t2 < 1.0) break;
          (t2 > t1 ? sr.gc2 : rate_c_[i]) *= 0.5;
          halved = true;
        }
        for (int h = 0; h < kMaxHalvings; ++h) {
          const double t1 = rate_a_[i] * sa1;
          const double t2 = safe ? sr.ga2 * sa2 : 0.0;
          const double t3 = safe ? sr.ga3 * sa3 : 0.0;
          if (actor_factor * (t1 + t2 + t3) < 1.0) break;
          if (t1 >= t2 && t1 >= t3) {
            rate_a_[i] *= 0.5;
          } else if (t2 >= t3) {
            sr.ga2 *= 0.5;
          } else {
            sr.ga3 *= 0.5;
          }
          halved = true;
        }
        if (halved) ++halvings_[i];
      }
      w.wc -= rate_c_[i] * critic_gradient(cur.sc[i], nxt.sc[i], eps_c, a, mode);
      if (safe) {
        w.wc2 -= sr.gc2 * safe_critic_block_gradient(cur.gbe[i], nxt.gbe[i], eps_c, a, !terminal);
        w.wa -= rate_a_[i] * safe_actor_block_gradient(cur.sa[i], eps_a, r_tilde);
        w.wa2 -= sr.ga2 * safe_actor_block_gradient(cur.gbe[i], eps_a, r_tilde);
        w.wa3 -= sr.ga3 * safe_actor_block_gradient(gbnu[i], eps_a, r_tilde);
      } else {
        w.wa -= rate_a_[i] * actor_gradient(cur.sa[i], eps_a, ob.r);
      }
      mon.cc[i] = std::max(mon.cc[i], cc);
      mon.ca[i] = std::max(mon.ca[i], ca);
    }

    e = e_next;
    std::swap(cur, nxt);
    if (use_states) states.swap(states_next);
  }

  double err = 0.0;
  bool finite = true;
  for (int i = 0; i < m; ++i) {
    err += nets_[i].distance(before[i]);
    finite = finite && nets_[i].wc.allFinite() && nets_[i].wa.allFinite();
  }
  if (!finite || !std::isfinite(err)) {
    nets_ = before;
    fail(ErrorKind::kDivergence, "non-finite weight update during a learning sweep");
  }
  for (int i = 0; i < m; ++i)
    if (mon.cc[i] >= 1.0 || mon.ca[i] >= 1.0) mon.flagged = true;
  mon.err = err;
  ++mon.sweeps;
  return err;
}

double DistributedLearner::rollout_cost(const WorldSnapshot& world) const {
  const int m = topo_.size();
  const int horizon = obj_.horizon;
  const bool use_states = safety_.enabled && static_cast<int>(world.states.size()) == m;
  Field e = world.e;
  Field e_next(4, m);
  std::vector<RobotState> states = world.states;
  std::vector<RobotState> states_next;
  std::vector<Vec2> u(m);
  std::vector<double> cost(m, 0.0);
  std::vector<Vec> en(m), sa(m), sc(m), gbe(m);
  const bool par = cfg_.parallel;
  for (int tau = 0; tau < horizon; ++tau) {
    const LeaderSignal& ld = world.leader[tau];
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < m; ++i) {
      topo_.gather(i, e, en[i]);
      features(i, en[i], use_states ? &states : nullptr, ld, sa[i], sc[i], gbe[i], nullptr);
      u[i] = actor_output(i, sa[i], gbe[i], nullptr, nullptr);
      cost[i] += stage_cost(en[i], u[i], obj_.robots[i].q, obj_.robots[i].r);
      e_next.col(i) = models_[i].step(en[i], u[i], ld.q.v, ld.omega, dt_);
    }
    if (use_states) {
      propagate_states(states, u, ld, dt_, states_next);
      states.swap(states_next);
    }
    e = e_next;
  }
  double j = 0.0;
  for (int i = 0; i < m; ++i) {
    const Vec4 ei = e.col(i);
    j += cost[i] + ei.dot(obj_.robots[i].p * ei);
  }
  return j;
}

std::vector<Vec2> DistributedLearner::actions(const WorldSnapshot& world) const {
  const int m = topo_.size();
  const bool use_states = safety_.enabled && static_cast<int>(world.states.size()) == m;
  std::vector<Vec2> u(m);
  const bool par = cfg_.parallel;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    Vec en, sa, sc, gbe;
    topo_.gather(i, world.e, en);
    features(i, en, use_states ? &world.states : nullptr, world.leader[0], sa, sc, gbe, nullptr);
    u[i] = actor_output(i, sa, gbe, nullptr, nullptr);
  }
  return u;
}

IntervalReport DistributedLearner::learn_interval(const WorldSnapshot& world,
                                                  const std::function<bool(double)>& stable) {
  IntervalReport rep;
  const int m = topo_.size();
  for (int attempt = 0;; ++attempt) {
    ConvergenceMonitor mon;
    for (int t = 0; t < cfg_.t_max; ++t) {
      if (sweep(world, mon) < cfg_.tol) break;
    }
    const double j = rollout_cost(world);
    if (!std::isfinite(j)) fail(ErrorKind::kDivergence, "non-finite predicted cost");
    if (!stable || stable(j)) {
      rep.cost = j;
      rep.monitor = std::move(mon);
      break;
    }
    if (attempt >= cfg_.retries) {
      std::ostringstream os;
      os << "stability condition still violated after " << cfg_.retries << " re-initializations (J = " << j << ")";
      fail(ErrorKind::kRetryExhausted, os.str());
    }
    reinitialize();
    ++rep.retries;
  }
  for (int i = 0; i < m; ++i) {
    if (rep.monitor.cc[i] < 1.0 && rep.monitor.ca[i] < 1.0) continue;
    std::ostringstream os;
    os << "robot " << i << ": convergence monitor C_c = " << rep.monitor.cc[i] << ", C_a = " << rep.monitor.ca[i];
    if (halvings_[i] > 0) os << "; rates halved at " << halvings_[i] << " updates";
    rep.warnings.push_back(os.str());
  }
  std::fill(halvings_.begin(), halvings_.end(), 0);
  rep.u = actions(world);
  return rep;
}

}  // namespace dlpc
