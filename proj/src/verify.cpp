#include "dlpc/verify.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace dlpc {

namespace {

constexpr double kFdTol = 1e-5;
constexpr double kLyapunovTol = 1e-8;

Mat random_mat(std::mt19937_64& rng, int r, int c, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

Mat spd(std::mt19937_64& rng, int n) {
  const Mat a = random_mat(rng, n, n, 1.0);
  return a * a.transpose() + Mat::Identity(n, n);
}

/// Central difference of a scalar loss with respect to every entry of w.
template <class F>
Mat fd_matrix(const Mat& w, F&& loss, double h) {
  Mat g(w.rows(), w.cols());
  Mat wp = w;
  for (int r = 0; r < w.rows(); ++r) {
    for (int c = 0; c < w.cols(); ++c) {
      const double keep = wp(r, c);
      wp(r, c) = keep + h;
      const double lp = loss(wp);
      wp(r, c) = keep - h;
      const double lm = loss(wp);
      wp(r, c) = keep;
      g(r, c) = (lp - lm) / (2.0 * h);
    }
  }
  return g;
}

CheckResult make(const std::string& name, double value, double tol, const std::string& detail = "") {
  CheckResult c;
  c.name = name;
  c.value = value;
  c.tolerance = tol;
  c.pass = std::isfinite(value) && value <= tol;
  c.detail = detail;
  return c;
}

}  // namespace

bool VerifyReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

std::string VerifyReport::text() const {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific;
  for (const auto& c : checks) {
    os << (c.pass ? "PASS " : "FAIL ") << c.name << " " << c.value << " <= " << c.tolerance;
    if (!c.detail.empty()) os << " (" << c.detail << ")";
    os << "\n";
  }
  return os.str();
}

std::string VerifyReport::json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& c : checks)
    j.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"tolerance", c.tolerance},
                 {"detail", c.detail}});
  nlohmann::ordered_json out;
  out["all_pass"] = all_pass();
  out["checks"] = j;
  return out.dump(2) + "\n";
}

double fd_relative_error(const Mat& analytic, const Mat& numeric) {
  require(analytic.rows() == numeric.rows() && analytic.cols() == numeric.cols(), ErrorKind::kInvalidArgument,
          "finite-difference comparison needs equal shapes");
  if (analytic.size() == 0) return 0.0;
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1.0);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

CheckResult check_fixed_point(const Topology& topo, double v_r, double dt) {
  double worst = 0.0;
  for (int i = 0; i < topo.size(); ++i) {
    const LocalModel model(topo, i);
    const Vec4 e1 = model.step(Vec::Zero(topo.neighborhood_dim(i)), Vec2::Zero(), v_r, 0.0, dt);
    worst = std::max(worst, e1.cwiseAbs().maxCoeff());
  }
  return make("model_fixed_point", worst, 0.0, "e = 0, u = 0 maps to e = 0");
}

CheckResult check_dynamics_jacobian(const Topology& topo, double v_r, double dt, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  const double h = 1e-6;
  for (int s = 0; s < samples; ++s) {
    const int i = static_cast<int>(rng() % static_cast<std::uint64_t>(topo.size()));
    const LocalModel model(topo, i);
    const int n = topo.neighborhood_dim(i);
    const Vec e = random_mat(rng, n, 1, 1.0);
    const Vec2 uu(u(rng), u(rng));
    const double vr = v_r + 0.5 * u(rng);
    const double om = 0.5 * u(rng);
    const Mat jac = model.state_jacobian(e, uu, vr, om, dt);
    Mat fd(4, n);
    for (int c = 0; c < n; ++c) {
      Vec ep = e, em = e;
      ep(c) += h;
      em(c) -= h;
      fd.col(c) = (model.step(ep, uu, vr, om, dt) - model.step(em, uu, vr, om, dt)) / (2.0 * h);
    }
    worst = std::max(worst, fd_relative_error(jac, fd));
  }
  return make("dynamics_jacobian_fd", worst, kFdTol, std::to_string(samples) + " samples");
}

CheckResult check_learning_gradients(int neighbors, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = 4 * neighbors;
  const double h = 1e-6;
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vec sigma = random_mat(rng, n, 1, 1.0);
    const Vec sigma_next = random_mat(rng, n, 1, 1.0);
    const Vec c = random_mat(rng, n, 1, 1.0);
    const Mat a = random_mat(rng, n, n, 0.5);
    const Mat w = random_mat(rng, n, n, 0.3);
    // Critic: eps = c + A^T W^T sigma+ - W^T sigma.
    auto critic_eps = [&](const Mat& ww) -> Vec {
      return c + a.transpose() * (ww.transpose() * sigma_next) - ww.transpose() * sigma;
    };
    const Mat gc = critic_gradient(sigma, sigma_next, critic_eps(w), a, CriticGradient::kFull);
    const Mat fc = fd_matrix(w, [&](const Mat& ww) { return critic_eps(ww).squaredNorm(); }, h);
    worst = std::max(worst, fd_relative_error(gc, fc));
    // Barrier critic block uses the same target form on the barrier features.
    const Mat gb = safe_critic_block_gradient(sigma, sigma_next, critic_eps(w), a, true);
    worst = std::max(worst, fd_relative_error(gb, fc));

    // Actor: eps = u_d - W^T sigma with loss eps^T (2R) eps.
    const Mat2 r = spd(rng, 2);
    const Vec2 ud = random_mat(rng, 2, 1, 1.0);
    const Mat wa = random_mat(rng, n, 2, 0.3);
    auto actor_eps = [&](const Mat& ww) -> Vec2 { return ud - ww.transpose() * sigma; };
    const Mat ga = actor_gradient(sigma, actor_eps(wa), r);
    const Mat fa = fd_matrix(
        wa, [&](const Mat& ww) { const Vec2 e = actor_eps(ww); return e.dot(2.0 * r * e); }, h);
    worst = std::max(worst, fd_relative_error(ga, fa));
    // Safe actor block: loss eps^T Rtilde eps.
    const Mat gs = safe_actor_block_gradient(sigma, actor_eps(wa), r);
    const Mat fs = fd_matrix(
        wa, [&](const Mat& ww) { const Vec2 e = actor_eps(ww); return e.dot(r * e); }, h);
    worst = std::max(worst, fd_relative_error(gs, fs));
  }
  return make("learning_gradients_fd", worst, kFdTol, std::to_string(samples) + " samples");
}

CheckResult check_barrier_gradients(const SafetySpec& safety, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> slack(0.02, 1.9 * safety.state.barrier.activation);
  const double h = 1e-6;
  double worst = 0.0;
  const BoxBarrier& box = safety.control;
  for (int s = 0; s < samples; ++s) {
    // Control box barrier, including points inside the relaxed band near the bound.
    const Vec2 z(box.bound(0) * u(rng), box.bound(1) * u(rng));
    Mat g = box.grad(z);
    Mat fd(2, 1);
    Mat hs = box.hess(z);
    Mat fh(2, 2);
    for (int k = 0; k < 2; ++k) {
      Vec2 zp = z, zm = z;
      zp(k) += h;
      zm(k) -= h;
      fd(k, 0) = (box.value(zp) - box.value(zm)) / (2.0 * h);
      fh.col(k) = (box.grad(zp) - box.grad(zm)) / (2.0 * h);
    }
    worst = std::max({worst, fd_relative_error(g, fd), fd_relative_error(hs, fh)});

    // State barrier in error coordinates through the position anchor.
    PositionAnchor anchor;
    anchor.c = Vec2(5.0 * u(rng), 5.0 * u(rng));
    anchor.theta_r = 3.0 * u(rng);
    anchor.gain = 1.0 + static_cast<double>(rng() % 3);
    const Vec4 e(u(rng), u(rng), u(rng), u(rng));
    const Vec2 p = anchor.position(e);
    StateConstraints sc = safety.state;
    Obstacle ob;
    ob.radius = 0.2;
    const double ang = std::numbers::pi * u(rng);
    ob.center = p + (ob.radius + slack(rng)) * Vec2(std::cos(ang), std::sin(ang));
    sc.obstacles = {ob};
    const Vec2 other = p + (sc.separation + slack(rng)) * Vec2(std::cos(-ang), std::sin(-ang));
    const std::vector<Vec2> others{other};
    const int nn = 2;
    const int own = static_cast<int>(rng() % 2);
    const Vec gv = state_barrier_gradient(sc, anchor, e, others, own, nn);
    Mat fe = Mat::Zero(4 * nn, 1);
    for (int k = 0; k < 4; ++k) {
      Vec4 ep = e, em = e;
      ep(k) += h;
      em(k) -= h;
      double vp = 0.0, vm = 0.0;
      state_barrier_gradient(sc, anchor, ep, others, own, nn, &vp);
      state_barrier_gradient(sc, anchor, em, others, own, nn, &vm);
      fe(4 * own + k, 0) = (vp - vm) / (2.0 * h);
    }
    worst = std::max(worst, fd_relative_error(gv, fe));
    // Position-space gradient and Hessian of the barrier.
    Vec2 gp;
    Mat2 hp;
    sc.eval(p, others, &gp, &hp);
    Mat fp(2, 1), fhp(2, 2);
    for (int k = 0; k < 2; ++k) {
      Vec2 pp = p, pm = p;
      pp(k) += h;
      pm(k) -= h;
      fp(k, 0) = (sc.eval(pp, others, nullptr, nullptr) - sc.eval(pm, others, nullptr, nullptr)) / (2.0 * h);
      Vec2 gpp, gpm;
      sc.eval(pp, others, &gpp, nullptr);
      sc.eval(pm, others, &gpm, nullptr);
      fhp.col(k) = (gpp - gpm) / (2.0 * h);
    }
    worst = std::max({worst, fd_relative_error(Mat(gp), fp), fd_relative_error(Mat(hp), fhp)});
  }
  return make("barrier_gradients_fd", worst, kFdTol, std::to_string(samples) + " samples");
}

CheckResult check_terminal_penalty(const Topology& topo, const ObjectiveSpec& base, const SafetySpec& safety,
                                   double v_r, double dt, const TerminalOptions& topt) {
  const PreparedObjective prep = prepare_objective(topo, base, safety, v_r, dt, topt);
  double pmin = 1e300;
  for (const auto& p : prep.terminal.p) pmin = std::min(pmin, lambda_min_sym(p));
  std::ostringstream d;
  d << "method " << to_string(prep.terminal.method) << ", min eig P " << pmin << ", certified "
    << (prep.terminal.certified ? "yes" : "no");
  CheckResult c = make("terminal_lyapunov_residual", prep.terminal.residual, kLyapunovTol, d.str());
  c.pass = c.pass && pmin > 0.0;
  return c;
}

std::vector<CheckResult> check_closed_loop(const RunConfig& cfg, int steps) {
  RunConfig c = cfg;
  c.scenario.steps = std::min(cfg.scenario.steps, steps);
  c.envelope.enabled = true;
  c.envelope.mode = EnvelopeMode::kGeometric;
  const Scenario sc = build_scenario(c);
  const RunOptions opt = build_options(c, sc, RunMode::kLearn);
  const RunRecord rec = run_closed_loop(sc, opt);
  std::vector<CheckResult> out;
  const std::string steps_txt = std::to_string(rec.steps.size()) + " steps, status " + rec.status;
  out.push_back(make("monitor_cc_below_one", rec.max_cc(), 1.0 - 1e-12, steps_txt));
  out.push_back(make("monitor_ca_below_one", rec.max_ca(), 1.0 - 1e-12, steps_txt));
  CheckResult env = make("stability_envelope", static_cast<double>(rec.check_failures), 0.0,
                         "check failures over " + std::to_string(rec.steps.size()) + " steps");
  env.pass = env.pass && !rec.diverged;
  out.push_back(env);
  return out;
}

VerifyReport run_invariant_suite(const RunConfig& cfg, int samples, int loop_steps) {
  VerifyReport rep;
  const Scenario sc = build_scenario(cfg);
  const double v_r = sc.leader.speed;
  int max_nbrs = 1;
  for (int i = 0; i < sc.topo.size(); ++i)
    max_nbrs = std::max(max_nbrs, static_cast<int>(sc.topo.neighbors(i).size()));
  const std::uint64_t seed = learner_seed(cfg.seed) ^ 0xa5a5a5a5ULL;
  rep.checks.push_back(check_fixed_point(sc.topo, v_r, sc.dt));
  rep.checks.push_back(check_dynamics_jacobian(sc.topo, v_r, sc.dt, samples, seed));
  rep.checks.push_back(check_learning_gradients(max_nbrs, std::max(1, samples / 10), seed + 1));
  rep.checks.push_back(check_barrier_gradients(sc.safety, samples, seed + 2));
  const ObjectiveConfig& o = cfg.objective;
  rep.checks.push_back(check_terminal_penalty(
      sc.topo, ObjectiveSpec::defaults(sc.topo, o.q_scale, o.r_scale, o.horizon, o.beta), sc.safety, v_r, sc.dt,
      o.terminal));
  for (auto& c : check_closed_loop(cfg, loop_steps)) rep.checks.push_back(std::move(c));
  return rep;
}

}  // namespace dlpc
