// Acceptance suite: one PASS/FAIL line per criterion. Every oracle below is
// computed here, independently of the library code it checks.

#include "dlpc/baseline.hpp"
#include "dlpc/config.hpp"
#include "dlpc/dynamics.hpp"
#include "dlpc/learning.hpp"
#include "dlpc/objective.hpp"
#include "dlpc/safety.hpp"
#include "dlpc/sim.hpp"
#include "dlpc/topology.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace dlpc;

namespace {

// ---- Pinned tolerances and budgets ------------------------------------------

constexpr double kModelTol = 1e-12;
constexpr int kModelSamples = 10000;
constexpr double kModelBudgetS = 1.0;

constexpr double kFdTol = 1e-5;
constexpr int kFdSamples = 1000;
constexpr double kFdStep = 1e-6;
constexpr double kFdBudgetS = 30.0;

constexpr double kLyapTol = 1e-8;
constexpr double kGammaEigTol = 1e-9;
constexpr double kTrivialTol = 1e-12;

constexpr double kMonitorLimit = 1.0;
constexpr double kInjectedGammaC = 10.0;

constexpr double kSteadyTol = 1e-4;
constexpr int kGridSteps = 2000;
constexpr double kGridBudgetS = 300.0;

constexpr int kCollisionRuns = 100;
constexpr int kCollisionRequired = 95;

constexpr double kTransferTol = 1e-3;
constexpr double kExtendedBudgetS = 1800.0;

constexpr double kScalingR2 = 0.95;
constexpr double kDeploySpeedup = 10.0;

constexpr double kCostRatio = 1.2;

constexpr double kTubeGrowthLimit = 20.0;  ///< terminal ball radius may not exceed this multiple of eps_w

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

/// ||a - n||_inf / max(||n||_inf, 1).
double rel_err(const Mat& a, const Mat& n) { return (a - n).cwiseAbs().maxCoeff() / std::max(n.cwiseAbs().maxCoeff(), 1.0); }

/// Central-difference derivative of a matrix-valued map with respect to every entry of x.
/// Column c of the result holds the flattened derivative along entry c.
Mat fd_jacobian(const Vec& x, const std::function<Vec(const Vec&)>& f) {
  const Vec f0 = f(x);
  Mat j(f0.size(), x.size());
  for (int c = 0; c < x.size(); ++c) {
    Vec xp = x, xm = x;
    xp(c) += kFdStep;
    xm(c) -= kFdStep;
    j.col(c) = (f(xp) - f(xm)) / (2.0 * kFdStep);
  }
  return j;
}

/// Central-difference gradient of a scalar function of a matrix.
Mat fd_gradient(const Mat& w, const std::function<double(const Mat&)>& f) {
  Mat g(w.rows(), w.cols());
  for (int r = 0; r < w.rows(); ++r)
    for (int c = 0; c < w.cols(); ++c) {
      Mat wp = w, wm = w;
      wp(r, c) += kFdStep;
      wm(r, c) -= kFdStep;
      g(r, c) = (f(wp) - f(wm)) / (2.0 * kFdStep);
    }
  return g;
}

Mat random_mat(std::mt19937_64& rng, int r, int c, double amp) {
  std::uniform_real_distribution<double> u(-amp, amp);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

/// Six robots with unequal degrees and partial pinning, used by the model checks.
Topology irregular_topology() {
  GraphSpec g;
  g.robots = 6;
  g.neighbors = {{1}, {0, 2}, {1, 3, 4}, {2}, {2, 5}, {4}};
  g.pinned = {0, 3};
  g.slots = line_slots(6, 1.0);
  return Topology::build(g);
}

// ---- Criterion 1 --------------------------------------------------------------

/// Scalar transcription of the discrete error model in physical variables:
/// v_j = v_r - e_v,j, theta_j - theta_i = e_theta,i - e_theta,j, omega_i = omega_r - u_1
/// and a_i = a_r - u_2.
void oracle_step(const double* e, int nn, int own, int pin, double u1, double u2, double v_r, double omega_r,
                 double dt, double* out) {
  const double ex = e[4 * own + 0];
  const double ey = e[4 * own + 1];
  const double eth = e[4 * own + 2];
  const double ev = e[4 * own + 3];
  const double omega_i = omega_r - u1;
  const double v_i = v_r - ev;
  double rel_x = 0.0;
  double rel_y = 0.0;
  for (int a = 0; a < nn; ++a) {
    if (a == own) continue;
    const double v_j = v_r - e[4 * a + 3];
    const double dtheta = eth - e[4 * a + 2];
    rel_x += v_j * std::cos(dtheta) - v_i;
    rel_y += v_j * std::sin(dtheta);
  }
  rel_x += pin * (v_r * std::cos(eth) - v_i);
  rel_y += pin * v_r * std::sin(eth);
  const double accel_r = 0.7;  // any leader acceleration cancels in e_v
  const double accel_i = accel_r - u2;
  out[0] = ex + dt * (omega_i * ey + rel_x);
  out[1] = ey + dt * (-omega_i * ex + rel_y);
  out[2] = eth + dt * (omega_r - omega_i);
  out[3] = ev + dt * (accel_r - accel_i);
}

Verdict criterion1() {
  const Topology t = irregular_topology();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> pick(0, t.size() - 1);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int s = 0; s < kModelSamples; ++s) {
    const int i = pick(rng);
    const int nn = static_cast<int>(t.neighbors(i).size());
    Vec e(4 * nn);
    for (int a = 0; a < nn; ++a) {
      e(4 * a + 0) = 2.0 * unit(rng);
      e(4 * a + 1) = 2.0 * unit(rng);
      e(4 * a + 2) = std::numbers::pi * unit(rng);
      e(4 * a + 3) = unit(rng);
    }
    const Vec2 u(2.0 * unit(rng), 2.0 * unit(rng));
    LeaderSignal l;
    l.q.v = 1.0 + unit(rng);
    l.omega = unit(rng);
    const double dt = 0.05 * (1.5 + unit(rng));
    const Vec4 got = step_error_dynamics(t, i, e, u, l, dt);
    double want[4];
    oracle_step(e.data(), nn, t.own_index(i), t.pin(i), u(0), u(1), l.q.v, l.omega, dt, want);
    for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(got(k) - want[k]));
  }
  double fixed = 0.0;
  for (int i = 0; i < t.size(); ++i)
    for (double v_r : {0.0, 0.7, 1.0, 2.5})
      for (double omega_r : {-0.4, 0.0, 0.3}) {
        LeaderSignal l;
        l.q.v = v_r;
        l.omega = omega_r;
        const Vec4 n = step_error_dynamics(t, i, Vec::Zero(t.neighborhood_dim(i)), Vec2::Zero(), l, 0.05);
        fixed = std::max(fixed, n.cwiseAbs().maxCoeff());
      }
  const double el = seconds_since(t0);
  Verdict v;
  v.pass = worst <= kModelTol && fixed == 0.0 && el < kModelBudgetS;
  v.detail = "max |step - oracle| " + fmt("%.2e", worst) + " over " + std::to_string(kModelSamples) +
             " inputs (tol 1e-12); |step(0,0)| = " + fmt("%.1e", fixed) + "; " + fmt("%.3f", el) + " s (< 1 s)";
  return v;
}

// ---- Criterion 2 --------------------------------------------------------------

Verdict criterion2() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Topology t = irregular_topology();
  std::uniform_int_distribution<int> pick(0, t.size() - 1);
  std::vector<std::pair<std::string, double>> worst;
  auto track = [&worst](const std::string& name, double err) {
    for (auto& w : worst)
      if (w.first == name) {
        w.second = std::max(w.second, err);
        return;
      }
    worst.emplace_back(name, err);
  };

  for (int s = 0; s < kFdSamples; ++s) {
    // Dynamics: state Jacobian and input map.
    const int i = pick(rng);
    const LocalModel model(t, i);
    const int n = t.neighborhood_dim(i);
    const Vec e = random_mat(rng, n, 1, 1.0);
    const Vec2 u = random_mat(rng, 2, 1, 1.0);
    const double v_r = 1.0 + 0.5 * unit(rng);
    const double w_r = 0.3 * unit(rng);
    const Mat ja = model.state_jacobian(e, u, v_r, w_r, 0.05);
    const Mat jn = fd_jacobian(e, [&](const Vec& x) -> Vec { return model.step(x, u, v_r, w_r, 0.05); });
    track("dynamics state Jacobian", rel_err(ja, jn));
    const Mat ga = LocalModel::input_map(e.segment<4>(4 * t.own_index(i)), 0.05);
    const Mat gn = fd_jacobian(Vec(u), [&](const Vec& x) -> Vec { return model.step(e, x, v_r, w_r, 0.05); });
    track("dynamics input map", rel_err(ga, gn));
    const Mat da = model.drift_jacobian(e, v_r, w_r, 0.05);
    const Mat dn = fd_jacobian(e, [&](const Vec& x) -> Vec { return model.drift(x, v_r, w_r, 0.05); });
    track("dynamics drift Jacobian", rel_err(da, dn));

    // Learning: critic (full gradient), barrier critic block, actor, safe actor block.
    const int m = 12;
    const Vec sig = random_mat(rng, m, 1, 1.0);
    const Vec sig_n = random_mat(rng, m, 1, 1.0);
    const Vec c = random_mat(rng, m, 1, 1.0);
    const Mat a = random_mat(rng, m, m, 0.5);
    const Mat w = random_mat(rng, m, m, 0.3);
    auto eps_c = [&](const Mat& ww) -> Vec { return c + a.transpose() * (ww.transpose() * sig_n) - ww.transpose() * sig; };
    const Mat fc = fd_gradient(w, [&](const Mat& ww) { return eps_c(ww).squaredNorm(); });
    track("critic gradient", rel_err(critic_gradient(sig, sig_n, eps_c(w), a, CriticGradient::kFull), fc));
    track("barrier critic block gradient", rel_err(safe_critic_block_gradient(sig, sig_n, eps_c(w), a, true), fc));
    const Mat rr = random_mat(rng, 2, 2, 1.0);
    const Mat2 r = rr * rr.transpose() + 0.2 * Mat2::Identity();
    const Vec2 ud = random_mat(rng, 2, 1, 1.0);
    const Mat wa = random_mat(rng, m, 2, 0.3);
    auto eps_a = [&](const Mat& ww) -> Vec2 { return ud - ww.transpose() * sig; };
    const Mat fa = fd_gradient(wa, [&](const Mat& ww) { const Vec2 x = eps_a(ww); return x.dot(2.0 * r * x); });
    track("actor gradient", rel_err(actor_gradient(sig, eps_a(wa), r), fa));
    const Mat fs = fd_gradient(wa, [&](const Mat& ww) { const Vec2 x = eps_a(ww); return x.dot(r * x); });
    track("safe actor block gradient", rel_err(safe_actor_block_gradient(sig, eps_a(wa), r), fs));

    // Safety: control box, distance barrier, obstacle field, error-coordinate state barrier.
    const BoxBarrier box{Vec2(5.0, 5.0), 0.1};
    const Vec z = Vec2(5.5 * unit(rng), 5.5 * unit(rng));
    const Mat bg = fd_jacobian(z, [&](const Vec& x) -> Vec { return Vec::Constant(1, box.value(x)); });
    track("box barrier gradient", rel_err(box.grad(z).transpose(), bg));
    const Mat bh = fd_jacobian(z, [&](const Vec& x) -> Vec { return box.grad(x); });
    track("box barrier Hessian", rel_err(box.hess(z), bh));
    const DistanceBarrier db{0.1, 2.0};
    const double sl = -0.5 + 3.0 * (0.5 + 0.5 * unit(rng));
    const Vec sv = Vec::Constant(1, sl);
    track("distance barrier slope",
          rel_err(Mat::Constant(1, 1, db.d1(sl)), fd_jacobian(sv, [&](const Vec& x) -> Vec { return Vec::Constant(1, db.value(x(0))); })));
    track("distance barrier curvature",
          rel_err(Mat::Constant(1, 1, db.d2(sl)), fd_jacobian(sv, [&](const Vec& x) -> Vec { return Vec::Constant(1, db.d1(x(0))); })));
    StateConstraints sc;
    sc.barrier = db;
    sc.obstacles = {Obstacle{Vec2(0.0, 0.0), 0.2}, Obstacle{Vec2(1.0, 0.5), 0.3}};
    sc.separation = 0.2;
    const std::vector<Vec2> others = {Vec2(0.5 + unit(rng), unit(rng))};
    const Vec p = Vec2(1.5 * unit(rng), 1.5 * unit(rng));
    Vec2 pg;
    Mat2 ph;
    sc.eval(p, others, &pg, &ph);
    track("obstacle barrier gradient",
          rel_err(pg.transpose(), fd_jacobian(p, [&](const Vec& x) -> Vec { return Vec::Constant(1, sc.eval(x, others, nullptr, nullptr)); })));
    track("obstacle barrier Hessian", rel_err(ph, fd_jacobian(p, [&](const Vec& x) -> Vec {
                                                Vec2 g;
                                                sc.eval(x, others, &g, nullptr);
                                                return g;
                                              })));
    PositionAnchor anc;
    anc.c = Vec2(unit(rng), unit(rng));
    anc.theta_r = unit(rng);
    anc.gain = 2.0;
    const Vec4 eo = 0.5 * Vec4(unit(rng), unit(rng), unit(rng), unit(rng));
    const Vec sg = state_barrier_gradient(sc, anc, eo, others, 1, 3);
    const Mat sn = fd_jacobian(Vec(eo), [&](const Vec& x) -> Vec {
      double val = 0.0;
      state_barrier_gradient(sc, anc, x, others, 1, 3, &val);
      return Vec::Constant(1, val);
    });
    track("state barrier gradient (error coordinates)", rel_err(sg.segment<4>(4).transpose(), sn));
  }

  // Baseline adjoint gradient, fewer samples since each one needs 4MN cost evaluations.
  {
    GraphSpec g;
    g.robots = 2;
    g.neighbors = path_graph(2);
    g.pinned = {0, 1};
    g.slots = line_slots(2, 1.0);
    const Topology tp = Topology::build(g);
    ObjectiveSpec obj = ObjectiveSpec::defaults(tp);
    obj.horizon = 10;
    LeaderSpec ls;
    ls.start = {0.0, 0.0, 0.0, 1.0};
    const auto leader = leader_trajectory(ls, 11, 0.05);
    for (int s = 0; s < 50; ++s) {
      const Field e0 = random_mat(rng, 4, 2, 0.5);
      ControlPlan plan = zero_plan(10, 2);
      for (auto& pl : plan) pl = random_mat(rng, 2, 2, 0.5);
      const ControlPlan ga = plan_gradient(tp, obj, e0, plan, leader, 0.05);
      Mat an(1, 40), nu(1, 40);
      int idx = 0;
      for (int k = 0; k < 10; ++k)
        for (int c = 0; c < 2; ++c)
          for (int r = 0; r < 2; ++r, ++idx) {
            ControlPlan pp = plan, pm = plan;
            pp[k](r, c) += kFdStep;
            pm[k](r, c) -= kFdStep;
            an(0, idx) = ga[k](r, c);
            nu(0, idx) = (plan_cost(tp, obj, e0, pp, leader, 0.05) - plan_cost(tp, obj, e0, pm, leader, 0.05)) /
                         (2.0 * kFdStep);
          }
      track("baseline plan gradient", rel_err(an, nu));
    }
  }

  const double el = seconds_since(t0);
  bool pass = el < kFdBudgetS;
  std::ostringstream os;
  double top = 0.0;
  std::string top_name;
  for (const auto& w : worst) {
    pass = pass && w.second <= kFdTol;
    if (w.second >= top) {
      top = w.second;
      top_name = w.first;
    }
  }
  os << worst.size() << " derivative families, " << kFdSamples << " samples each; worst rel err "
     << fmt("%.2e", top) << " (" << top_name << ", tol 1e-5); " << fmt("%.1f", el) << " s (< 30 s)";
  for (const auto& w : worst)
    if (w.second > kFdTol) os << "; FAILED " << w.first << " " << fmt("%.2e", w.second);
  return {pass, os.str()};
}

// ---- Criterion 3 --------------------------------------------------------------

Topology pinned_pair() {
  GraphSpec g;
  g.robots = 2;
  g.neighbors = path_graph(2);
  g.pinned = {0, 1};
  g.slots = line_slots(2, 1.0);
  return Topology::build(g);
}

Verdict criterion3() {
  const Topology t = pinned_pair();
  const ObjectiveSpec spec = ObjectiveSpec::defaults(t);
  const auto lin = linearize_origin(t, 1.0, 0.0, 0.05);
  const StabilizingGains gains = synthesize_gains(t, lin, spec);
  const TerminalPenalty tp = terminal_penalty(t, lin, gains, spec, TerminalOptions{});
  // Independent stacked residual and global inequality on the assembled 8 x 8 team.
  const int m = t.size();
  Mat res = Mat::Zero(4 * m, 4 * m);
  Mat ineq = Mat::Zero(4 * m, 4 * m);
  Mat gam = Mat::Zero(4 * m, 4 * m);
  double pmin = 1e300;
  for (int i = 0; i < m; ++i) {
    const auto& nb = t.neighbors(i);
    const Mat f = lin[i].a + lin[i].b * gains.k[i];
    const Mat qbar = spec.robots[i].q + gains.k[i].transpose() * spec.robots[i].r * gains.k[i];
    const int n = static_cast<int>(nb.size());
    Mat w = Mat::Zero(4 * n, 4 * m);  // selects e_N_i from the stacked error
    for (int a = 0; a < n; ++a) w.block<4, 4>(4 * a, 4 * nb[a]) = Mat4::Identity();
    Mat ei = Mat::Zero(4, 4 * m);
    ei.block<4, 4>(0, 4 * i) = Mat4::Identity();
    const Mat local = w.transpose() * (f.transpose() * tp.p[i] * f + 1.1 * qbar - tp.gamma[i]) * w -
                      ei.transpose() * tp.p[i] * ei;
    res += local;
    gam += w.transpose() * tp.gamma[i] * w;
    ineq += w.transpose() * (f.transpose() * tp.p[i] * f + 1.1 * qbar) * w - ei.transpose() * tp.p[i] * ei;
    pmin = std::min(pmin, Eigen::SelfAdjointEigenSolver<Mat>(tp.p[i]).eigenvalues().minCoeff());
  }
  const double residual = res.norm();
  const double gamma_top = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (gam + gam.transpose())).eigenvalues().maxCoeff();
  const double ineq_top = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (ineq + ineq.transpose())).eigenvalues().maxCoeff();

  // Decoupled robots under a dead-beat gain: the local equation collapses to P = beta (Q + K^T R K).
  GraphSpec g;
  g.robots = 3;
  g.pinned = {0, 1, 2};
  const Topology dec = Topology::build(g);
  const Mat k = (Mat(2, 4) << 0.3, -0.1, 0.2, 0.5, -0.4, 0.6, 0.1, 0.2).finished();
  const Mat q = Mat::Identity(4, 4);
  const Mat2 r = 0.5 * Mat2::Identity();
  std::vector<Mat> f0(3, Mat::Zero(4, 4));
  std::vector<Mat> qb(3, q + k.transpose() * r * k);
  double trivial = 0.0;
  for (TerminalMethod method : {TerminalMethod::kZeroGamma, TerminalMethod::kLocalLyap}) {
    TerminalOptions o;
    o.method = method;
    const TerminalPenalty d = terminal_penalty(dec, f0, qb, 1.1, o);
    for (int i = 0; i < 3; ++i)
      trivial = std::max(trivial, (d.p[i] - 1.1 * (q + k.transpose() * r * k)).cwiseAbs().maxCoeff());
  }
  // Single robot with the synthesized gain: the Lyapunov solution against a Smith iteration.
  GraphSpec g1;
  g1.robots = 1;
  g1.pinned = {0};
  g1.slots = line_slots(1, 1.0);
  const Topology one = Topology::build(g1);
  const auto lin1 = linearize_origin(one, 1.0, 0.0, 0.05);
  const ObjectiveSpec s1 = ObjectiveSpec::defaults(one);
  const StabilizingGains k1 = synthesize_gains(one, lin1, s1);
  const Mat f1 = lin1[0].a + lin1[0].b * k1.k[0];
  const Mat q1 = 1.1 * (s1.robots[0].q + k1.k[0].transpose() * s1.robots[0].r * k1.k[0]);
  Mat smith = q1;
  Mat term = q1;
  for (int it = 0; it < 200000 && term.norm() > 1e-16 * smith.norm(); ++it) {
    term = f1.transpose() * term * f1;
    smith += term;
  }
  TerminalOptions lo;
  lo.method = TerminalMethod::kLocalLyap;
  const TerminalPenalty lp = terminal_penalty(one, std::vector<Mat>{f1}, std::vector<Mat>{q1 / 1.1}, 1.1, lo);
  const double smith_err = (lp.p[0] - smith).norm() / smith.norm();

  Verdict v;
  v.pass = residual <= kLyapTol && gamma_top <= kGammaEigTol && ineq_top <= kGammaEigTol && pmin > 0.0 &&
           trivial <= kTrivialTol && smith_err <= kLyapTol;
  v.detail = "M=2 stacked residual " + fmt("%.2e", residual) + " (tol 1e-8), max eig sum W'GW " +
             fmt("%.2e", gamma_top) + ", stacked inequality max eig " + fmt("%.2e", ineq_top) + ", min eig P " +
             fmt("%.3g", pmin) + "; decoupled P - beta(Q+K'RK) " + fmt("%.1e", trivial) +
             "; single-robot Lyapunov vs Smith rel " + fmt("%.1e", smith_err);
  return v;
}

// ---- Criterion 4 --------------------------------------------------------------

RunConfig default_pair(int steps) {
  RunConfig cfg;
  cfg.seed = 4;
  cfg.scenario.robots = 2;
  cfg.scenario.steps = steps;
  cfg.scenario.disorder = {0.5, 0.2, 0.1};
  return cfg;
}

RunRecord run_config(const RunConfig& cfg, RunMode mode = RunMode::kLearn) {
  const Scenario sc = build_scenario(cfg);
  return run_closed_loop(sc, build_options(cfg, sc, mode));
}

Verdict criterion4() {
  const RunConfig cfg = default_pair(200);
  const RunRecord r = run_config(cfg);
  double cc = 0.0;
  double ca = 0.0;
  int intervals = 0;
  bool all_below = true;
  for (const auto& s : r.steps) {
    cc = std::max(cc, s.cc_max);
    ca = std::max(ca, s.ca_max);
    intervals += s.sweeps > 0;
    all_below = all_below && s.cc_max < kMonitorLimit && s.ca_max < kMonitorLimit;
  }
  RunConfig bad = default_pair(40);
  bad.learner.gamma_c = kInjectedGammaC;
  const RunRecord rb = run_config(bad);
  int flagged = 0;
  double cc_bad = 0.0;
  for (const auto& s : rb.steps) {
    flagged += s.cc_max >= kMonitorLimit;
    cc_bad = std::max(cc_bad, s.cc_max);
  }
  const bool warned = std::any_of(rb.warnings.begin(), rb.warnings.end(), [](const std::string& w) {
    return w.find("convergence monitor") != std::string::npos;
  });
  Verdict v;
  v.pass = r.status == "ok" && intervals == static_cast<int>(r.steps.size()) && all_below && flagged > 0 && warned;
  v.detail = std::to_string(intervals) + " intervals, max C_c " + fmt("%.3f", cc) + ", max C_a " + fmt("%.3f", ca) +
             " (< 1); gamma_c = 10 gives max C_c " + fmt("%.3f", cc_bad) + ", flagged at " + std::to_string(flagged) + " of " + std::to_string(rb.steps.size()) +
             " steps with warning " + (warned ? "raised" : "missing") + " (injected run status " + rb.status +
             (rb.diverged ? ", diverged)" : ", not diverged)");
  return v;
}

// ---- Criteria 5 and 11 ----------------------------------------------------------

RunConfig grid_config() {
  RunConfig cfg = parse_config(R"({
    "seed": 3,
    "mode": "safe",
    "scenario": {
      "robots": 16, "shape": "grid", "rows": 4, "spacing": 1.0, "row_spacing": 2.0,
      "graph": "row_paths", "pinning": "all",
      "leader": {"profile": "constant", "x": -5.0, "y": 3.0, "theta": 0.0, "v": 1.0, "speed": 1.0},
      "disorder": {"position": 0.3, "heading": 0.2, "speed": 0.1},
      "obstacles": [{"center": [0.0, 4.0], "radius": 0.2}, {"center": [0.0, 2.0], "radius": 0.2},
                    {"center": [30.0, 0.0], "radius": 0.2}, {"center": [30.0, -2.0], "radius": 0.2}],
      "steps": 2000
    },
    "objective": {"terminal": {"method": "state_weight"}},
    "safety": {"activation": 1.0},
    "envelope": {"enabled": true, "mode": "geometric", "rho": 0.995, "scale": 1.0}
  })");
  return cfg;
}

std::optional<RunRecord> g_grid_run;
double g_grid_seconds = 0.0;

const RunRecord& grid_run() {
  if (!g_grid_run) {
    const auto t0 = Clock::now();
    g_grid_run = run_config(grid_config());
    g_grid_seconds = seconds_since(t0);
  }
  return *g_grid_run;
}

double min_obstacle_distance(const RunRecord& r, const std::vector<Obstacle>& obs) {
  double md = 1e300;
  for (const auto& st : r.states)
    for (const auto& s : st)
      for (const auto& o : obs) md = std::min(md, (s.position() - o.center).norm());
  for (const auto& s : r.final_states)
    for (const auto& o : obs) md = std::min(md, (s.position() - o.center).norm());
  return md;
}

Verdict criterion5() {
  const RunRecord& r = grid_run();
  const RunConfig cfg = grid_config();
  // Steady state is reached at the first recorded step whose error stays below the tolerance through the end.
  int reached = -1;
  for (int k = static_cast<int>(r.errors.size()) - 1; k >= 0; --k) {
    if (r.errors[k].colwise().norm().maxCoeff() > kSteadyTol) break;
    reached = k;
  }
  const double term = r.terminal_error();
  const double md = min_obstacle_distance(r, cfg.scenario.obstacles);
  Verdict v;
  v.pass = r.status == "ok" && static_cast<int>(r.steps.size()) == kGridSteps && term <= kSteadyTol &&
           r.violations.empty() && md > 0.2 && g_grid_seconds < kGridBudgetS;
  v.detail = "terminal error " + fmt("%.2e", term) + " after " + std::to_string(r.steps.size()) +
             " steps (tol 1e-4" + (reached >= 0 ? ", below from step " + std::to_string(reached) : std::string()) +
             "); violations " + std::to_string(r.violations.size()) + ", closest obstacle distance " +
             fmt("%.3f", md) + " m (d = 0.2); status " + r.status + "; " + fmt("%.1f", g_grid_seconds) +
             " s (< 300 s)";
  return v;
}

Verdict criterion11() {
  const RunRecord& r = grid_run();
  int checked = 0;
  int failed = 0;
  for (const auto& s : r.steps) {
    checked += std::isfinite(s.jb);
    failed += !s.check_ok || s.retries > 0 || !(s.j <= s.jb);
  }
  RunConfig cfg = grid_config();
  cfg.scenario.steps = 300;
  const std::vector<int> inject = {40, 150, 260};
  cfg.faults.steps = inject;
  const RunRecord f = run_config(cfg);
  bool exact = f.status == "ok" && f.reinitializations == static_cast<int>(inject.size());
  for (int k = 0; k < static_cast<int>(f.steps.size()); ++k) {
    const bool injected = std::find(inject.begin(), inject.end(), k) != inject.end();
    exact = exact && f.steps[k].retries == (injected ? 1 : 0);
  }
  Verdict v;
  v.pass = checked == static_cast<int>(r.steps.size()) && failed == 0 && exact;
  v.detail = "envelope checked at " + std::to_string(checked) + " of " + std::to_string(r.steps.size()) +
             " steps, " + std::to_string(failed) + " failures; faults at 40, 150, 260 gave " +
             std::to_string(f.reinitializations) + " re-initializations" + (exact ? " at exactly those steps" : "");
  return v;
}

// ---- Criterion 6 --------------------------------------------------------------

/// Two robots in a line behind a straight leader at 1 m/s. The obstacle sits
/// 0.15 m beside the nominal path, inside the required 0.2 m clearance, so the
/// robots must deviate to pass it.
RunConfig collision_config(std::uint64_t seed) {
  RunConfig cfg = parse_config(R"({
    "mode": "safe",
    "scenario": {
      "robots": 2,
      "leader": {"profile": "constant", "x": 0.0, "y": 0.0, "v": 1.0, "speed": 1.0},
      "disorder": {"position": 0.3, "heading": 0.2, "speed": 0.1},
      "obstacles": [{"center": [5.0, 0.15], "radius": 0.2}],
      "steps": 300
    },
    "objective": {"terminal": {"method": "state_weight"}},
    "safety": {"activation": 1.0}
  })");
  cfg.seed = seed;
  return cfg;
}

Verdict criterion6() {
  int ok = 0;
  int violated = 0;
  int errored = 0;
  double worst_clearance = 1e300;
  for (int s = 0; s < kCollisionRuns; ++s) {
    const RunConfig cfg = collision_config(1000 + s);
    try {
      const RunRecord r = run_config(cfg);
      const double md = min_obstacle_distance(r, cfg.scenario.obstacles);
      worst_clearance = std::min(worst_clearance, md);
      const bool success = r.status == "ok" && !r.diverged && r.violations.empty();
      ok += success;
      violated += !r.violations.empty();
    } catch (const Error&) {
      ++errored;
    }
  }
  Verdict v;
  v.pass = ok >= kCollisionRequired;
  v.detail = std::to_string(ok) + " of " + std::to_string(kCollisionRuns) + " runs collision free (need 95); " +
             std::to_string(violated) + " with violations, " + std::to_string(errored) +
             " aborted; closest approach " + fmt("%.3f", worst_clearance) + " m (d = 0.2)";
  return v;
}

// ---- Criteria 7, 9, 10 share trained pair weights --------------------------------

RunConfig training_config() {
  RunConfig cfg;
  cfg.seed = 7;
  cfg.scenario.robots = 2;
  cfg.scenario.steps = 200;
  cfg.scenario.disorder = {0.5, 0.2, 0.1};
  cfg.training.episodes = 20;
  return cfg;
}

std::optional<TrainingRun> g_training;

const TrainingRun& trained_pair() {
  if (!g_training) {
    const RunConfig cfg = training_config();
    const Scenario sc = build_scenario(cfg);
    g_training = train_episodes(sc, build_options(cfg, sc, RunMode::kLearn), cfg.training.episodes);
  }
  return *g_training;
}

RunRecord deploy_trained(RunConfig cfg) {
  const TrainingRun& tr = trained_pair();
  const Scenario src_sc = build_scenario(training_config());
  // Round-trip through the weights format so the test covers what the CLI ships.
  const WeightsFile w =
      parse_weights(dump_weights(make_weights(src_sc.topo, tr.last.final_policy.actor_basis, tr.last.critic_basis,
                                              tr.last.final_nets)));
  const Scenario sc = build_scenario(cfg);
  RunOptions opt = build_options(cfg, sc, RunMode::kDeploy);
  const Topology src = Topology::build(w.graph);
  opt.policy = src.size() == sc.topo.size() ? w.policy() : deploy_policy(w.policy(), src, 0, sc.topo);
  return run_closed_loop(sc, opt);
}

RunConfig transfer_config(int robots, const std::string& shape, int steps) {
  RunConfig cfg;
  cfg.seed = 5;
  cfg.scenario.robots = robots;
  cfg.scenario.shape = shape;
  cfg.scenario.graph = shape == "circle" ? "ring" : "path";
  cfg.scenario.steps = steps;
  cfg.scenario.disorder = {0.3, 0.2, 0.1};
  return cfg;
}

Verdict criterion7() {
  const TrainingRun& tr = trained_pair();
  const RunRecord line = deploy_trained(transfer_config(50, "line", 1000));
  const RunRecord circle = deploy_trained(transfer_config(50, "circle", 1000));
  const auto t0 = Clock::now();
  const RunRecord big = deploy_trained(transfer_config(1000, "line", 1000));
  const double big_s = seconds_since(t0);
  Verdict v;
  v.pass = tr.last.status == "ok" && line.status == "ok" && circle.status == "ok" && big.status == "ok" &&
           line.terminal_error() <= kTransferTol && circle.terminal_error() <= kTransferTol &&
           big.terminal_error() <= kTransferTol && big_s < kExtendedBudgetS;
  v.detail = "trained M=2 (20 episodes, last terminal " + fmt("%.1e", tr.terminal.back()) +
             "); M=50 line terminal " + fmt("%.2e", line.terminal_error()) + ", M=50 circle " +
             fmt("%.2e", circle.terminal_error()) + ", M=1000 line " + fmt("%.2e", big.terminal_error()) + " in " +
             fmt("%.1f", big_s) + " s (tol 1e-3, budget 1800 s)";
  return v;
}

Verdict criterion9() {
  RunConfig cfg = default_pair(200);
  cfg.seed = 1;
  const RunRecord learned = run_config(cfg, RunMode::kLearn);
  const RunRecord base = run_config(cfg, RunMode::kBaseline);
  const double ratio = learned.cumulative_cost() / base.cumulative_cost();
  Verdict v;
  v.pass = learned.status == "ok" && base.status == "ok" && ratio <= kCostRatio;
  v.detail = "learned V " + fmt("%.4f", learned.cumulative_cost()) + ", receding-horizon baseline V " +
             fmt("%.4f", base.cumulative_cost()) + ", ratio " + fmt("%.4f", ratio) + " (<= 1.2)";
  return v;
}

Verdict criterion10() {
  std::vector<double> balls;
  const std::vector<double> eps = {0.005, 0.01, 0.02};
  const int window = 200;
  std::ostringstream os;
  bool bounded = true;
  for (double w : eps) {
    RunConfig cfg = training_config();
    cfg.scenario.steps = 600;
    cfg.scenario.eps_w = w;
    cfg.seed = 12;
    const RunRecord r = deploy_trained(cfg);
    const double ball = r.tail_error(window);
    balls.push_back(ball);
    bounded = bounded && r.status == "ok" && std::isfinite(ball) && ball <= kTubeGrowthLimit * w;
    os << "eps_w " << w << ": ball " << fmt("%.3e", ball) << " (" << fmt("%.2f", ball / w) << " eps_w); ";
  }
  const bool nonzero = std::all_of(balls.begin(), balls.end(), [](double b) { return b > 0.0; });
  const bool monotone = balls[0] < balls[1] && balls[1] < balls[2];
  Verdict v;
  v.pass = nonzero && bounded && monotone;
  v.detail = os.str() + (monotone ? "monotone" : "NOT monotone") + ", bound " + fmt("%.0f", kTubeGrowthLimit) +
             " eps_w over the last " + std::to_string(window) + " steps";
  return v;
}

// ---- Criterion 8 --------------------------------------------------------------

Verdict criterion8() {
  RunConfig cfg;
  cfg.seed = 8;
  cfg.scenario.robots = 10;
  cfg.scenario.disorder = {0.3, 0.2, 0.1};
  const Scenario probe = build_scenario(cfg);
  const RunOptions base = build_options(cfg, probe, RunMode::kLearn);
  auto factory = [&cfg](int m, std::uint64_t) { return build_scenario(cfg, m); };
  const ScalingTable t = measure_scaling({10, 100, 1000}, factory, base, 10, scenario_seed(cfg.seed));
  double speedup = 0.0;
  std::ostringstream os;
  for (const auto& r : t.rows) {
    os << "M=" << r.robots << " learn " << fmt("%.2e", r.learn_s) << " s, deploy " << fmt("%.2e", r.deploy_s) << " s; ";
    if (r.robots == 100) speedup = r.learn_s / r.deploy_s;
  }
  // Oracle fit: ordinary least squares computed here.
  std::vector<double> x, y;
  for (const auto& r : t.rows) {
    x.push_back(r.robots);
    y.push_back(r.learn_s);
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double r2 = sxy * sxy / (sxx * syy);
  Verdict v;
  v.pass = r2 >= kScalingR2 && speedup >= kDeploySpeedup;
  v.detail = os.str() + "learn R^2 " + fmt("%.4f", r2) + " (>= 0.95), deploy speedup at M=100 " +
             fmt("%.0f", speedup) + "x (>= 10x)";
  return v;
}

// ---- Criterion 12 -------------------------------------------------------------

Verdict criterion12() {
  RunConfig cfg = default_pair(120);
  cfg.seed = 21;
  cfg.training.episodes = 2;
  const std::string text = dump_config(cfg);
  auto once = [&text] {
    const RunConfig c = parse_config(text);
    const Scenario sc = build_scenario(c);
    return train_episodes(sc, build_options(c, sc, RunMode::kLearn), c.training.episodes).last.csv(false);
  };
  const std::string a = once();
  const std::string b = once();
  RunConfig serial = parse_config(text);
  serial.learner.parallel = false;
  const Scenario sc = build_scenario(serial);
  const std::string s = train_episodes(sc, build_options(serial, sc, RunMode::kLearn), 2).last.csv(false);
  const bool round_trip = dump_config(parse_config(text)) == text;
  Verdict v;
  v.pass = !a.empty() && a == b && a == s && round_trip;
  v.detail = "two runs of the same resolved config: " + std::to_string(a.size()) + " CSV bytes, " +
             (a == b ? "identical" : "DIFFERENT") + "; serial path " + (a == s ? "identical" : "DIFFERENT") +
             "; config round trip " + (round_trip ? "exact" : "BROKEN");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    int id;
    const char* name;
    Verdict (*run)();
  };
  const std::vector<Entry> all = {
      {1, "model fidelity and equilibrium", criterion1},
      {2, "Jacobian and gradient suite", criterion2},
      {3, "terminal penalty", criterion3},
      {4, "convergence monitors", criterion4},
      {5, "M=16 closed-loop learning with obstacles", criterion5},
      {6, "safe-learning success rate", criterion6},
      {7, "transfer from M=2", criterion7},
      {8, "scaling", criterion8},
      {9, "baseline cost comparison", criterion9},
      {10, "disturbance terminal balls", criterion10},
      {11, "stability envelope and fault injection", criterion11},
      {12, "determinism", criterion12},
  };
  std::set<int> only;
  for (int a = 1; a < argc; ++a) only.insert(std::atoi(argv[a]));
  int failures = 0;
  for (const auto& e : all) {
    if (!only.empty() && !only.count(e.id)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = e.run();
    } catch (const std::exception& ex) {
      v.pass = false;
      v.detail = std::string("exception: ") + ex.what();
    }
    failures += !v.pass;
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", e.id, e.name, v.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
