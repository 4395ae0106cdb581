#include "dlpc/sim.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

namespace dlpc {

LeaderProfile parse_leader_profile(const std::string& s) {
  if (s == "hover") return LeaderProfile::kHover;
  if (s == "ramp") return LeaderProfile::kRamp;
  if (s == "constant") return LeaderProfile::kConstant;
  if (s == "arc") return LeaderProfile::kArc;
  fail(ErrorKind::kConfig, "unknown leader profile '" + s + "'");
}

std::string to_string(LeaderProfile p) {
  switch (p) {
    case LeaderProfile::kHover:
      return "hover";
    case LeaderProfile::kRamp:
      return "ramp";
    case LeaderProfile::kConstant:
      return "constant";
    case LeaderProfile::kArc:
      return "arc";
  }
  return "unknown";
}

std::vector<LeaderSignal> leader_trajectory(const LeaderSpec& spec, int count, double dt) {
  require(count >= 1 && dt > 0.0, ErrorKind::kInvalidArgument, "leader trajectory needs count >= 1 and dt > 0");
  std::vector<LeaderSignal> out(count);
  RobotState q = ingest_state(spec.start);
  const double ramp_accel = spec.ramp_time > 0.0 ? (spec.speed - spec.start.v) / spec.ramp_time : 0.0;
  for (int k = 0; k < count; ++k) {
    LeaderSignal l;
    switch (spec.profile) {
      case LeaderProfile::kHover:
        q.v = 0.0;
        break;
      case LeaderProfile::kConstant:
        q.v = spec.speed;
        break;
      case LeaderProfile::kArc:
        q.v = spec.speed;
        l.omega = spec.speed * spec.curvature;
        break;
      case LeaderProfile::kRamp: {
        const double remaining = spec.speed - q.v;
        if (std::abs(remaining) > 1e-12) {
          double a = ramp_accel;
          if (std::abs(a * dt) > std::abs(remaining) || a == 0.0) a = remaining / dt;
          l.accel = a;
        }
        break;
      }
    }
    l.q = q;
    out[k] = l;
    q = integrate_unicycle(q, l.omega, l.accel, dt);
  }
  return out;
}

std::vector<RobotState> initial_states(const Scenario& sc) {
  const int m = sc.topo.size();
  if (!sc.initial.empty()) {
    require(static_cast<int>(sc.initial.size()) == m, ErrorKind::kConfig, "one initial state per robot required");
    std::vector<RobotState> out;
    for (const auto& s : sc.initial) out.push_back(ingest_state(s));
    return out;
  }
  require(static_cast<int>(sc.topo.slots().size()) == m, ErrorKind::kConfig,
          "initial states need either explicit values or formation slots");
  std::mt19937_64 rng(sc.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<RobotState> out(m);
  const RobotState& l = sc.leader.start;
  for (int i = 0; i < m; ++i) {
    RobotState s;
    const Vec2 p = l.position() + sc.topo.slots()[i];
    s.px = p(0) + sc.disorder.position * u(rng);
    s.py = p(1) + sc.disorder.position * u(rng);
    s.theta = l.theta + sc.disorder.heading * u(rng);
    s.v = l.v + sc.disorder.speed * u(rng);
    out[i] = ingest_state(s);
  }
  return out;
}

RunMode parse_run_mode(const std::string& s) {
  if (s == "learn") return RunMode::kLearn;
  if (s == "deploy") return RunMode::kDeploy;
  if (s == "baseline") return RunMode::kBaseline;
  fail(ErrorKind::kConfig, "unknown run mode '" + s + "'");
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::kLearn:
      return "learn";
    case RunMode::kDeploy:
      return "deploy";
    case RunMode::kBaseline:
      return "baseline";
  }
  return "unknown";
}

double RunRecord::cumulative_cost() const {
  double v = 0.0;
  for (const auto& s : steps) v += s.stage;
  return v;
}

double RunRecord::terminal_error() const {
  double e = 0.0;
  for (int i = 0; i < final_error.cols(); ++i) e = std::max(e, final_error.col(i).norm());
  return e;
}

double RunRecord::tail_error(int window) const {
  double e = terminal_error();
  const int n = static_cast<int>(errors.size());
  for (int k = std::max(0, n - window); k < n; ++k)
    for (int i = 0; i < errors[k].cols(); ++i) e = std::max(e, errors[k].col(i).norm());
  return e;
}

double RunRecord::position_mae() const {
  double s = 0.0;
  long n = 0;
  for (const auto& f : errors) {
    s += f.topRows(2).cwiseAbs().sum();
    n += 2 * f.cols();
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

double RunRecord::mean_wall() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : steps) s += r.wall;
  return s / static_cast<double>(steps.size());
}

double RunRecord::max_cc() const {
  double v = 0.0;
  for (const auto& r : steps) v = std::max(v, r.cc_max);
  return v;
}

double RunRecord::max_ca() const {
  double v = 0.0;
  for (const auto& r : steps) v = std::max(v, r.ca_max);
  return v;
}

std::string RunRecord::csv(bool include_timing) const {
  std::ostringstream os;
  os << "k,robot,px,py,theta,v,ex,ey,etheta,ev,u1,u2,stage,J,Jb,retries,cc_max,ca_max";
  if (include_timing) os << ",wall_s";
  os << '\n';
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    os << ',' << buf;
  };
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const StepRecord& s = steps[k];
    for (int i = 0; i < robots; ++i) {
      os << s.k << ',' << i;
      const RobotState& q = states[k][i];
      num(q.px);
      num(q.py);
      num(q.theta);
      num(q.v);
      for (int a = 0; a < 4; ++a) num(errors[k](a, i));
      num(controls[k](0, i));
      num(controls[k](1, i));
      num(robot_stage[k](i));
      num(s.j);
      num(s.jb);
      os << ',' << s.retries;
      num(s.cc_max);
      num(s.ca_max);
      if (include_timing) num(s.wall);
      os << '\n';
    }
  }
  return os.str();
}

void RunRecord::write_csv(const std::string& path, bool include_timing) const {
  std::ofstream f(path);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot open " + path + " for writing");
  f << csv(include_timing);
  require(static_cast<bool>(f), ErrorKind::kIo, "failed writing " + path);
}

std::string RunRecord::summary_json() const {
  nlohmann::json j;
  j["mode"] = to_string(mode);
  j["robots"] = robots;
  j["dt"] = dt;
  j["steps"] = steps.size();
  j["status"] = status;
  j["diverged"] = diverged;
  j["terminal_error"] = terminal_error();
  j["position_mae"] = position_mae();
  j["cumulative_cost"] = cumulative_cost();
  j["max_cc"] = max_cc();
  j["max_ca"] = max_ca();
  j["violations"] = violations.size();
  j["reinitializations"] = reinitializations;
  j["check_failures"] = check_failures;
  j["mean_step_wall_s"] = mean_wall();
  j["warnings"] = warnings;
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& v : violations) ev.push_back({{"k", v.k}, {"robot", v.robot}, {"kind", v.kind}, {"id", v.id},
                                                 {"value", v.value}});
  j["violation_events"] = ev;
  return j.dump(2);
}

namespace {

/// Team stage cost contributions r_i at step k.
Vec robot_stage_costs(const Topology& topo, const ObjectiveSpec& obj, const Field& e,
                      const Eigen::Matrix<double, 2, Eigen::Dynamic>& u) {
  Vec r(topo.size());
  Vec en;
  for (int i = 0; i < topo.size(); ++i) {
    topo.gather(i, e, en);
    r(i) = stage_cost(en, u.col(i), obj.robots[i].q, obj.robots[i].r);
  }
  return r;
}

void log_violations(const Scenario& sc, const std::vector<RobotState>& states,
                    const Eigen::Matrix<double, 2, Eigen::Dynamic>& u, int k, std::vector<ViolationEvent>& out) {
  const SafetySpec& s = sc.safety;
  for (int i = 0; i < sc.topo.size(); ++i) {
    const std::vector<Vec2> others = pair_positions(s, sc.topo, i, states);
    const std::vector<double> xi = s.state.constraint_values(states[i].position(), others);
    for (std::size_t c = 0; c < xi.size(); ++c)
      if (xi[c] > 0.0) out.push_back({k, i, "state", static_cast<int>(c), xi[c]});
    if (s.enabled) {
      for (int c = 0; c < 2; ++c)
        if (std::abs(u(c, i)) > s.control.bound(c)) out.push_back({k, i, "control", c, u(c, i)});
    }
  }
}

/// Uniform sample from the 4-ball of radius r.
Vec4 ball_sample(std::mt19937_64& rng, double r) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec4 d(g(rng), g(rng), g(rng), g(rng));
  const double n = d.norm();
  if (n == 0.0) return Vec4::Zero();
  return d / n * r * std::pow(u(rng), 0.25);
}

}  // namespace

std::vector<Vec2> policy_actions(const Topology& topo, const Policy& policy, const SafetySpec& safety,
                                 const Field& e, const std::vector<RobotState>& states, const LeaderSignal& leader,
                                 bool parallel) {
  const int m = topo.size();
  require(static_cast<int>(policy.wa.size()) == m, ErrorKind::kInvalidArgument,
          "policy robot count does not match the topology");
  std::vector<Vec2> u(m);
  const bool safe = policy.safe() && safety.enabled;
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < m; ++i) {
    Vec en;
    topo.gather(i, e, en);
    if (safe) {
      const Vec gbe = state_barrier_feature(safety, topo, i, en, &states, leader);
      u[i] = policy.action(i, en, &gbe, &safety.control);
    } else {
      u[i] = policy.action(i, en);
    }
  }
  return u;
}

double policy_rollout_cost(const Topology& topo, const ObjectiveSpec& obj, const Policy& policy,
                           const SafetySpec& safety, const Field& e0, const std::vector<RobotState>& states0,
                           const std::vector<LeaderSignal>& leader, double dt) {
  const int m = topo.size();
  const bool with_states = policy.safe() && safety.enabled && static_cast<int>(states0.size()) == m;
  Field e = e0;
  Field en_f(4, m);
  std::vector<RobotState> states = states0;
  double j = 0.0;
  Vec en;
  for (int t = 0; t < obj.horizon; ++t) {
    const LeaderSignal& l = leader[t];
    const std::vector<Vec2> u = policy_actions(topo, policy, safety, e, states, l, false);
    for (int i = 0; i < m; ++i) {
      topo.gather(i, e, en);
      j += stage_cost(en, u[i], obj.robots[i].q, obj.robots[i].r);
      en_f.col(i) = LocalModel(topo, i).step(en, u[i], l.q.v, l.omega, dt);
    }
    if (with_states) {
      for (int i = 0; i < m; ++i) {
        const Vec2 c = physical_command(l, u[i]);
        states[i] = integrate_unicycle(states[i], c(0), c(1), dt);
      }
    }
    e = en_f;
  }
  for (int i = 0; i < m; ++i) {
    const Vec4 ei = e.col(i);
    j += ei.dot(obj.robots[i].p * ei);
  }
  return j;
}

RunRecord run_closed_loop(const Scenario& sc, const RunOptions& opt) {
  using Clock = std::chrono::steady_clock;
  const Topology& topo = sc.topo;
  const int m = topo.size();
  const int horizon = opt.objective.horizon;
  require(sc.steps >= 1, ErrorKind::kConfig, "a run needs at least one step");
  require(sc.dt > 0.0, ErrorKind::kConfig, "time step must be positive");
  const std::vector<LeaderSignal> leader = leader_trajectory(sc.leader, sc.steps + horizon + 1, sc.dt);
  std::vector<RobotState> states = initial_states(sc);
  for (int i = 0; i < m; ++i) {
    for (const auto& o : sc.safety.state.obstacles)
      require((states[i].position() - o.center).norm() > o.radius, ErrorKind::kConfig,
              "robot " + std::to_string(i) + " starts inside an obstacle");
  }
  std::mt19937_64 noise(sc.seed ^ 0x9e3779b97f4a7c15ULL);

  RunRecord rec;
  rec.robots = m;
  rec.dt = sc.dt;
  rec.mode = opt.mode;

  std::unique_ptr<DistributedLearner> learner;
  LearnerConfig lcfg = opt.learner;
  lcfg.parallel = opt.parallel;
  if (opt.mode == RunMode::kLearn) {
    learner = std::make_unique<DistributedLearner>(topo, opt.objective, lcfg, sc.safety, sc.dt);
    if (!opt.initial_nets.empty()) {
      require(static_cast<int>(opt.initial_nets.size()) == m, ErrorKind::kConfig,
              "warm-start weights have the wrong robot count");
      learner->mutable_nets() = opt.initial_nets;
    }
  }
  Envelope env = opt.envelope;
  ControlPlan plan;
  bool have_plan = false;
  ControlPlan env_plan;
  bool have_env_plan = false;

  for (int k = 0; k < sc.steps; ++k) {
    const Field e = formation_errors(topo, states, leader[k]);
    if (!e.allFinite() || e.cwiseAbs().maxCoeff() > opt.divergence) {
      rec.diverged = true;
      rec.status = "diverged at step " + std::to_string(k);
      break;
    }
    const std::vector<LeaderSignal> preview(leader.begin() + k, leader.begin() + k + horizon + 1);
    StepRecord sr;
    sr.k = k;
    sr.jb = std::numeric_limits<double>::quiet_NaN();
    Eigen::Matrix<double, 2, Eigen::Dynamic> u(2, m);
    const auto t0 = Clock::now();
    if (opt.mode == RunMode::kLearn) {
      WorldSnapshot world{e, states, preview};
      if (opt.use_envelope && env.mode() == EnvelopeMode::kShiftedTail) {
        // Baseline plan re-optimized every step; the shifted plan bounds the learned cost.
        ControlPlan cand = have_env_plan ? env_plan : zero_plan(horizon, m);
        if (have_env_plan) {
          env.push(plan_cost(topo, opt.objective, e, cand, preview, sc.dt));
        }
        OpenLoopResult ol = solve_open_loop(topo, opt.objective, e, preview, sc.dt, opt.baseline, &cand);
        env_plan = opt.tail_gains.empty() ? ol.u : shift_plan(topo, ol.u, e, preview, sc.dt, opt.tail_gains);
        have_env_plan = true;
      }
      bool injected = std::find(opt.faults.steps.begin(), opt.faults.steps.end(), k) != opt.faults.steps.end();
      std::function<bool(double)> check;
      if (opt.use_envelope) {
        check = [&](double j) {
          if (!env.initialized()) env.reset(j);
          const double jb = env.bound(k);
          sr.jb = jb;
          double jj = j;
          if (injected) {
            jj = j * opt.faults.factor + 1.0;
            injected = false;
          }
          const bool ok = stability_check(jj, jb);
          if (!ok) ++rec.check_failures;
          return ok;
        };
      }
      IntervalReport rep;
      try {
        rep = learner->learn_interval(world, check);
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::kDivergence && err.kind() != ErrorKind::kRetryExhausted) throw;
        rec.diverged = err.kind() == ErrorKind::kDivergence;
        rec.status = std::string(err.what()) + " at step " + std::to_string(k);
        break;
      }
      for (int i = 0; i < m; ++i) u.col(i) = rep.u[i];
      sr.j = rep.cost;
      sr.retries = rep.retries;
      sr.sweeps = rep.monitor.sweeps;
      sr.cc_max = rep.monitor.cc_max();
      sr.ca_max = rep.monitor.ca_max();
      sr.check_ok = rep.retries == 0;
      rec.reinitializations += rep.retries;
      for (auto& w : rep.warnings) rec.warnings.push_back("step " + std::to_string(k) + ": " + w);
    } else if (opt.mode == RunMode::kDeploy) {
      const std::vector<Vec2> uu = policy_actions(topo, opt.policy, sc.safety, e, states, leader[k], opt.parallel);
      for (int i = 0; i < m; ++i) u.col(i) = uu[i];
    } else {
      OpenLoopResult ol = solve_open_loop(topo, opt.objective, e, preview, sc.dt, opt.baseline,
                                          have_plan ? &plan : nullptr);
      for (int i = 0; i < m; ++i) u.col(i) = ol.u[0].col(i);
      sr.j = ol.cost;
      plan = opt.tail_gains.empty() ? ControlPlan(ol.u.begin() + 1, ol.u.end())
                                    : shift_plan(topo, ol.u, e, preview, sc.dt, opt.tail_gains);
      if (opt.tail_gains.empty()) plan.push_back(Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, m));
      have_plan = true;
    }
    sr.wall = std::chrono::duration<double>(Clock::now() - t0).count();
    if (opt.mode == RunMode::kDeploy) {
      sr.j = policy_rollout_cost(topo, opt.objective, opt.policy, sc.safety, e, states, preview, sc.dt);
    }
    if (!u.allFinite()) {
      rec.diverged = true;
      rec.status = "non-finite control at step " + std::to_string(k);
      break;
    }
    const Vec rs = robot_stage_costs(topo, opt.objective, e, u);
    sr.stage = rs.sum();
    log_violations(sc, states, u, k, rec.violations);
    rec.states.push_back(states);
    rec.errors.push_back(e);
    rec.controls.push_back(u);
    rec.robot_stage.push_back(rs);
    rec.steps.push_back(sr);

    for (int i = 0; i < m; ++i) {
      const Vec2 cmd = physical_command(leader[k], u.col(i));
      RobotState nxt = integrate_unicycle(states[i], cmd(0), cmd(1), sc.dt);
      if (sc.eps_w > 0.0) {
        const Vec4 w = ball_sample(noise, sc.eps_w);
        nxt.px += w(0);
        nxt.py += w(1);
        nxt.theta += w(2);
        nxt.v += w(3);
      }
      states[i] = ingest_state(nxt);
    }
  }
  const int last = static_cast<int>(rec.steps.size());
  rec.final_states = states;
  rec.final_error = formation_errors(topo, states, leader[last]);
  if (learner) {
    rec.final_policy = learner->policy();
    rec.final_nets = learner->nets();
    rec.critic_basis = learner->critic_basis();
  }
  return rec;
}

TrainingRun train_episodes(Scenario sc, RunOptions opt, int episodes) {
  require(episodes >= 1, ErrorKind::kConfig, "training needs at least one episode");
  require(opt.mode == RunMode::kLearn, ErrorKind::kConfig, "training episodes run in learn mode");
  TrainingRun out;
  const std::uint64_t base = sc.seed;
  for (int ep = 0; ep < episodes; ++ep) {
    sc.seed = base + static_cast<std::uint64_t>(ep);
    out.last = run_closed_loop(sc, opt);
    out.terminal.push_back(out.last.terminal_error());
    out.reinitializations += out.last.reinitializations;
    if (out.last.diverged) break;
    opt.initial_nets = out.last.final_nets;
  }
  return out;
}

PreparedObjective prepare_objective(const Topology& topo, ObjectiveSpec objective, const SafetySpec& safety,
                                    double v_r, double dt, const TerminalOptions& topt) {
  PreparedObjective out;
  const std::vector<Linearization> lin = linearize_origin(topo, v_r, 0.0, dt);
  out.gains = synthesize_gains(topo, lin, objective);
  std::vector<Mat> f(topo.size());
  std::vector<Mat> qbar(topo.size());
  for (int i = 0; i < topo.size(); ++i) {
    const auto& ob = objective.robots[i];
    f[i] = lin[i].a + lin[i].b * out.gains.k[i];
    if (safety.enabled) {
      const Mat he = state_switch_hessian(safety.state, topo.own_index(i), static_cast<int>(topo.neighbors(i).size()),
                                          topo.degree(i) + topo.pin(i));
      qbar[i] = safe_closed_loop_weight(ob.q, ob.r, out.gains.k[i], he, safety.control.switch_hessian(), safety.mu);
    } else {
      qbar[i] = closed_loop_weight(ob.q, ob.r, out.gains.k[i]);
    }
  }
  std::vector<Mat> q(topo.size());
  for (int i = 0; i < topo.size(); ++i) q[i] = objective.robots[i].q;
  out.terminal = terminal_penalty(topo, f, qbar, objective.beta, topt, &q);
  for (int i = 0; i < topo.size(); ++i) objective.robots[i].p = out.terminal.p[i];
  out.objective = std::move(objective);
  return out;
}

double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y, double* slope, double* intercept) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::kInvalidArgument, "linear fit needs two or more points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  require(den != 0.0, ErrorKind::kInvalidArgument, "linear fit needs distinct x values");
  const double b = (n * sxy - sx * sy) / den;
  const double a = (sy - b * sx) / n;
  if (slope) *slope = b;
  if (intercept) *intercept = a;
  const double my = sy / n;
  double ss_tot = 0, ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ss_tot += (y[i] - my) * (y[i] - my);
    const double r = y[i] - (a + b * x[i]);
    ss_res += r * r;
  }
  return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

Scenario line_scenario(int robots, std::uint64_t seed) {
  GraphSpec g;
  g.robots = robots;
  g.neighbors = path_graph(robots);
  for (int i = 0; i < robots; ++i) g.pinned.push_back(i);
  g.slots = line_slots(robots, 1.0);
  Scenario sc;
  sc.topo = Topology::build(g);
  sc.leader.profile = LeaderProfile::kConstant;
  sc.leader.speed = 1.0;
  sc.leader.start.v = 1.0;
  sc.disorder.position = 0.3;
  sc.disorder.heading = 0.2;
  sc.disorder.speed = 0.1;
  sc.seed = seed;
  return sc;
}

ScalingTable measure_scaling(const std::vector<int>& robots, ScenarioFactory factory, const RunOptions& base,
                             int steps, std::uint64_t seed) {
  ScalingTable t;
  std::vector<double> x, yl, yd;
  for (int m : robots) {
    Scenario sc = factory(m, seed);
    sc.steps = steps;
    RunOptions lo = base;
    lo.mode = RunMode::kLearn;
    lo.use_envelope = false;
    lo.objective = ObjectiveSpec::defaults(sc.topo, 1.0, 0.5, base.objective.horizon, base.objective.beta);
    const RunRecord lr = run_closed_loop(sc, lo);
    RunOptions dop = lo;
    dop.mode = RunMode::kDeploy;
    dop.policy = lr.final_policy;
    const RunRecord dr = run_closed_loop(sc, dop);
    ScalingRow row;
    row.robots = m;
    row.learn_s = lr.mean_wall();
    row.deploy_s = dr.mean_wall();
    t.rows.push_back(row);
    x.push_back(m);
    yl.push_back(row.learn_s);
    yd.push_back(row.deploy_s);
  }
  if (x.size() >= 2) {
    t.learn_r2 = linear_fit_r2(x, yl, &t.learn_slope);
    t.deploy_r2 = linear_fit_r2(x, yd);
  }
  return t;
}

}  // namespace dlpc
