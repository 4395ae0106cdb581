#include "dlpc/config.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dlpc {

using Json = nlohmann::ordered_json;

namespace {

/// Reads one JSON object, tracking which keys were consumed so that leftovers
/// can be reported as unknown.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j.is_object(), ErrorKind::kConfig, where() + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  Reader child(const char* key) {
    require(has(key), ErrorKind::kConfig, "missing key " + sub(key));
    return Reader(raw(key), sub(key));
  }

  void get(const char* key, double& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    require(v.is_number(), ErrorKind::kConfig, sub(key) + " must be a number");
    out = v.get<double>();
    require(std::isfinite(out), ErrorKind::kConfig, sub(key) + " must be finite");
  }
  void get(const char* key, int& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    require(v.is_number_integer(), ErrorKind::kConfig, sub(key) + " must be an integer");
    out = v.get<int>();
  }
  void get(const char* key, std::uint64_t& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), ErrorKind::kConfig,
            sub(key) + " must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void get(const char* key, bool& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    require(v.is_boolean(), ErrorKind::kConfig, sub(key) + " must be true or false");
    out = v.get<bool>();
  }
  void get(const char* key, std::string& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    require(v.is_string(), ErrorKind::kConfig, sub(key) + " must be a string");
    out = v.get<std::string>();
  }
  void get(const char* key, Vec2& out) {
    if (!has(key)) return;
    out = vec2(raw(key), sub(key));
  }
  void get(const char* key, std::vector<int>& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    require(v.is_array(), ErrorKind::kConfig, sub(key) + " must be an array of integers");
    out.clear();
    for (const auto& x : v) {
      require(x.is_number_integer(), ErrorKind::kConfig, sub(key) + " must be an array of integers");
      out.push_back(x.get<int>());
    }
  }
  void get(const char* key, std::vector<std::vector<int>>& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    require(v.is_array(), ErrorKind::kConfig, sub(key) + " must be an array of integer arrays");
    out.clear();
    for (const auto& row : v) {
      require(row.is_array(), ErrorKind::kConfig, sub(key) + " must be an array of integer arrays");
      std::vector<int> r;
      for (const auto& x : row) {
        require(x.is_number_integer(), ErrorKind::kConfig, sub(key) + " must be an array of integer arrays");
        r.push_back(x.get<int>());
      }
      out.push_back(std::move(r));
    }
  }
  void get(const char* key, std::vector<Vec2>& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    require(v.is_array(), ErrorKind::kConfig, sub(key) + " must be an array of [x, y] pairs");
    out.clear();
    for (const auto& x : v) out.push_back(vec2(x, sub(key)));
  }

  /// Rejects every key that was not read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      require(seen_.count(it.key()) > 0, ErrorKind::kConfig, "unknown key " + sub(it.key()));
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  static Vec2 vec2(const Json& v, const std::string& path) {
    require(v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number(), ErrorKind::kConfig,
            path + " entries must be [x, y] number pairs");
    return Vec2(v[0].get<double>(), v[1].get<double>());
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json vec2_json(const Vec2& v) { return Json::array({v(0), v(1)}); }

Json mat_json(const Mat& m) {
  Json rows = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from(const Json& j, const std::string& path) {
  require(j.is_array(), ErrorKind::kConfig, path + " must be an array of rows");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Mat();
  require(j[0].is_array(), ErrorKind::kConfig, path + " must be an array of rows");
  const int cols = static_cast<int>(j[0].size());
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    require(j[r].is_array() && static_cast<int>(j[r].size()) == cols, ErrorKind::kConfig,
            path + " rows must have equal length");
    for (int c = 0; c < cols; ++c) {
      require(j[r][c].is_number(), ErrorKind::kConfig, path + " entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

void read_leader(Reader r, LeaderSpec& l) {
  std::string profile = to_string(l.profile);
  r.get("profile", profile);
  l.profile = parse_leader_profile(profile);
  r.get("x", l.start.px);
  r.get("y", l.start.py);
  r.get("theta", l.start.theta);
  r.get("v", l.start.v);
  r.get("speed", l.speed);
  r.get("ramp_time", l.ramp_time);
  r.get("curvature", l.curvature);
  r.finish();
}

void read_scenario(Reader r, ScenarioConfig& s) {
  r.get("robots", s.robots);
  r.get("shape", s.shape);
  r.get("spacing", s.spacing);
  r.get("rows", s.rows);
  r.get("row_spacing", s.row_spacing);
  r.get("slots", s.slots);
  r.get("graph", s.graph);
  r.get("adjacency", s.adjacency);
  r.get("pinning", s.pinning);
  r.get("pinned", s.pinned);
  if (r.has("leader")) read_leader(r.child("leader"), s.leader);
  if (r.has("disorder")) {
    Reader d = r.child("disorder");
    d.get("position", s.disorder.position);
    d.get("heading", s.disorder.heading);
    d.get("speed", s.disorder.speed);
    d.finish();
  }
  if (r.has("obstacles")) {
    const Json& arr = r.raw("obstacles");
    const std::string path = r.sub("obstacles");
    require(arr.is_array(), ErrorKind::kConfig, path + " must be an array");
    s.obstacles.clear();
    for (std::size_t k = 0; k < arr.size(); ++k) {
      Reader o(arr[k], path + "[" + std::to_string(k) + "]");
      Obstacle ob;
      o.get("center", ob.center);
      o.get("radius", ob.radius);
      o.finish();
      s.obstacles.push_back(ob);
    }
  }
  r.get("eps_w", s.eps_w);
  r.get("steps", s.steps);
  r.get("dt", s.dt);
  r.finish();
}

void read_objective(Reader r, ObjectiveConfig& o) {
  r.get("q_scale", o.q_scale);
  r.get("r_scale", o.r_scale);
  r.get("horizon", o.horizon);
  r.get("beta", o.beta);
  if (r.has("terminal")) {
    Reader t = r.child("terminal");
    std::string method = to_string(o.terminal.method);
    t.get("method", method);
    o.terminal.method = parse_terminal_method(method);
    t.get("max_iter", o.terminal.max_iter);
    t.get("margin", o.terminal.margin);
    t.get("p_floor", o.terminal.p_floor);
    t.get("step", o.terminal.step);
    t.finish();
  }
  r.finish();
}

void read_learner(Reader r, LearnerConfig& l) {
  r.get("gamma_c", l.gamma_c);
  r.get("gamma_a", l.gamma_a);
  if (r.has("safe_rates")) {
    Reader s = r.child("safe_rates");
    s.get("gc1", l.safe_rates.gc1);
    s.get("gc2", l.safe_rates.gc2);
    s.get("ga1", l.safe_rates.ga1);
    s.get("ga2", l.safe_rates.ga2);
    s.get("ga3", l.safe_rates.ga3);
    s.finish();
  }
  r.get("t_max", l.t_max);
  r.get("tol", l.tol);
  r.get("init_lo", l.init_lo);
  r.get("init_hi", l.init_hi);
  r.get("retries", l.retries);
  std::string grad = to_string(l.critic_gradient);
  r.get("critic_gradient", grad);
  l.critic_gradient = parse_critic_gradient(grad);
  r.get("basis_scale", l.basis_scale);
  r.get("halve_on_violation", l.halve_on_violation);
  r.get("parallel", l.parallel);
  r.finish();
}

void read_safety(Reader r, SafetySpec& s) {
  r.get("mu", s.mu);
  r.get("state_kappa", s.state.barrier.kappa);
  r.get("activation", s.state.barrier.activation);
  r.get("separation", s.state.separation);
  r.get("control_bound", s.control.bound);
  r.get("control_kappa", s.control.kappa);
  r.get("pairs", s.pairs);
  r.finish();
}

void read_envelope(Reader r, EnvelopeConfig& e) {
  r.get("enabled", e.enabled);
  std::string mode = to_string(e.mode);
  r.get("mode", mode);
  e.mode = parse_envelope_mode(mode);
  r.get("rho", e.rho);
  r.get("scale", e.scale);
  r.finish();
}

void read_baseline(Reader r, OpenLoopOptions& b) {
  r.get("max_iter", b.max_iter);
  r.get("grad_tol", b.grad_tol);
  r.get("armijo", b.armijo);
  r.get("step0", b.step0);
  r.get("shrink", b.shrink);
  r.get("linearized", b.linearized);
  r.get("bound", b.bound);
  r.finish();
}

Json json_of(const RunConfig& c) {
  const ScenarioConfig& s = c.scenario;
  Json slots = Json::array();
  for (const auto& p : s.slots) slots.push_back(vec2_json(p));
  Json obstacles = Json::array();
  for (const auto& o : s.obstacles) {
    Json jo;
    jo["center"] = vec2_json(o.center);
    jo["radius"] = o.radius;
    obstacles.push_back(std::move(jo));
  }
  Json j;
  j["seed"] = c.seed;
  j["mode"] = c.mode;
  j["output_dir"] = c.output_dir;
  Json& js = j["scenario"];
  js["robots"] = s.robots;
  js["shape"] = s.shape;
  js["spacing"] = s.spacing;
  js["rows"] = s.rows;
  js["row_spacing"] = s.row_spacing;
  js["slots"] = slots;
  js["graph"] = s.graph;
  js["adjacency"] = s.adjacency.empty() ? Json::array() : Json(s.adjacency);
  js["pinning"] = s.pinning;
  js["pinned"] = s.pinned.empty() ? Json::array() : Json(s.pinned);
  Json& jl = js["leader"];
  jl["profile"] = to_string(s.leader.profile);
  jl["x"] = s.leader.start.px;
  jl["y"] = s.leader.start.py;
  jl["theta"] = s.leader.start.theta;
  jl["v"] = s.leader.start.v;
  jl["speed"] = s.leader.speed;
  jl["ramp_time"] = s.leader.ramp_time;
  jl["curvature"] = s.leader.curvature;
  js["disorder"] = {{"position", s.disorder.position}, {"heading", s.disorder.heading}, {"speed", s.disorder.speed}};
  js["obstacles"] = obstacles;
  js["eps_w"] = s.eps_w;
  js["steps"] = s.steps;
  js["dt"] = s.dt;

  const ObjectiveConfig& o = c.objective;
  Json& jo = j["objective"];
  jo["q_scale"] = o.q_scale;
  jo["r_scale"] = o.r_scale;
  jo["horizon"] = o.horizon;
  jo["beta"] = o.beta;
  jo["terminal"] = {{"method", to_string(o.terminal.method)},
                    {"max_iter", o.terminal.max_iter},
                    {"margin", o.terminal.margin},
                    {"p_floor", o.terminal.p_floor},
                    {"step", o.terminal.step}};

  const LearnerConfig& l = c.learner;
  Json& jn = j["learner"];
  jn["gamma_c"] = l.gamma_c;
  jn["gamma_a"] = l.gamma_a;
  jn["safe_rates"] = {{"gc1", l.safe_rates.gc1},
                      {"gc2", l.safe_rates.gc2},
                      {"ga1", l.safe_rates.ga1},
                      {"ga2", l.safe_rates.ga2},
                      {"ga3", l.safe_rates.ga3}};
  jn["t_max"] = l.t_max;
  jn["tol"] = l.tol;
  jn["init_lo"] = l.init_lo;
  jn["init_hi"] = l.init_hi;
  jn["retries"] = l.retries;
  jn["critic_gradient"] = to_string(l.critic_gradient);
  jn["basis_scale"] = l.basis_scale;
  jn["halve_on_violation"] = l.halve_on_violation;
  jn["parallel"] = l.parallel;

  const SafetySpec& f = c.safety;
  j["safety"] = {{"mu", f.mu},
                 {"state_kappa", f.state.barrier.kappa},
                 {"activation", f.state.barrier.activation},
                 {"separation", f.state.separation},
                 {"control_bound", vec2_json(f.control.bound)},
                 {"control_kappa", f.control.kappa},
                 {"pairs", f.pairs}};
  j["envelope"] = {{"enabled", c.envelope.enabled},
                   {"mode", to_string(c.envelope.mode)},
                   {"rho", c.envelope.rho},
                   {"scale", c.envelope.scale}};
  j["faults"] = {{"steps", c.faults.steps.empty() ? Json::array() : Json(c.faults.steps)},
                 {"factor", c.faults.factor}};
  j["baseline"] = {{"max_iter", c.baseline.max_iter},   {"grad_tol", c.baseline.grad_tol},
                   {"armijo", c.baseline.armijo},       {"step0", c.baseline.step0},
                   {"shrink", c.baseline.shrink},       {"linearized", c.baseline.linearized},
                   {"bound", vec2_json(c.baseline.bound)}};
  j["training"] = {{"episodes", c.training.episodes}};
  j["deploy"] = {{"weights", c.deploy.weights}, {"source_robot", c.deploy.source_robot}};
  j["bench"] = {{"robots", Json(c.bench.robots)}, {"steps", c.bench.steps}};
  return j;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  r.get("mode", c.mode);
  r.get("output_dir", c.output_dir);
  if (r.has("scenario")) read_scenario(r.child("scenario"), c.scenario);
  if (r.has("objective")) read_objective(r.child("objective"), c.objective);
  if (r.has("learner")) read_learner(r.child("learner"), c.learner);
  if (r.has("safety")) read_safety(r.child("safety"), c.safety);
  if (r.has("envelope")) read_envelope(r.child("envelope"), c.envelope);
  if (r.has("faults")) {
    Reader f = r.child("faults");
    f.get("steps", c.faults.steps);
    f.get("factor", c.faults.factor);
    f.finish();
  }
  if (r.has("baseline")) read_baseline(r.child("baseline"), c.baseline);
  if (r.has("training")) {
    Reader t = r.child("training");
    t.get("episodes", c.training.episodes);
    t.finish();
  }
  if (r.has("deploy")) {
    Reader d = r.child("deploy");
    d.get("weights", c.deploy.weights);
    d.get("source_robot", c.deploy.source_robot);
    d.finish();
  }
  if (r.has("bench")) {
    Reader b = r.child("bench");
    b.get("robots", c.bench.robots);
    b.get("steps", c.bench.steps);
    b.finish();
  }
  r.finish();
  validate_config(c);
  return c;
}

RunConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

std::string dump_config(const RunConfig& cfg) { return json_of(cfg).dump(2) + "\n"; }

void validate_config(const RunConfig& c) {
  const ScenarioConfig& s = c.scenario;
  require(c.mode == "safe" || c.mode == "unconstrained", ErrorKind::kConfig,
          "mode must be 'safe' or 'unconstrained'");
  require(s.robots >= 1, ErrorKind::kConfig, "scenario.robots must be at least 1");
  require(s.steps >= 1, ErrorKind::kConfig, "scenario.steps must be at least 1");
  require(s.dt > 0.0, ErrorKind::kConfig, "scenario.dt must be positive");
  require(s.spacing > 0.0, ErrorKind::kConfig, "scenario.spacing must be positive");
  require(s.eps_w >= 0.0, ErrorKind::kConfig, "scenario.eps_w must be non-negative");
  require(s.shape == "line" || s.shape == "grid" || s.shape == "circle" || s.shape == "explicit", ErrorKind::kConfig,
          "scenario.shape must be line, grid, circle or explicit");
  require(s.graph == "path" || s.graph == "ring" || s.graph == "directed_ring" || s.graph == "row_paths" ||
              s.graph == "explicit",
          ErrorKind::kConfig, "scenario.graph must be path, ring, directed_ring, row_paths or explicit");
  require(s.pinning == "all" || s.pinning == "first" || s.pinning == "row_heads" || s.pinning == "explicit",
          ErrorKind::kConfig, "scenario.pinning must be all, first, row_heads or explicit");
  require(s.rows >= 1, ErrorKind::kConfig, "scenario.rows must be at least 1");
  require(s.shape != "grid" || s.robots % s.rows == 0, ErrorKind::kConfig,
          "scenario.robots must be a multiple of scenario.rows for the grid shape");
  require(s.disorder.position >= 0.0 && s.disorder.heading >= 0.0 && s.disorder.speed >= 0.0, ErrorKind::kConfig,
          "scenario.disorder half-widths must be non-negative");
  for (const auto& o : s.obstacles)
    require(o.radius > 0.0, ErrorKind::kConfig, "scenario.obstacles radius must be positive");
  require(c.objective.horizon >= 1, ErrorKind::kConfig, "objective.horizon must be at least 1");
  require(c.objective.q_scale > 0.0 && c.objective.r_scale > 0.0, ErrorKind::kConfig,
          "objective.q_scale and objective.r_scale must be positive");
  require(c.objective.beta >= 1.0, ErrorKind::kConfig, "objective.beta must be at least 1");
  const LearnerConfig& l = c.learner;
  require(l.gamma_c > 0.0 && l.gamma_a > 0.0, ErrorKind::kConfig, "learner rates must be positive");
  require(l.t_max >= 1, ErrorKind::kConfig, "learner.t_max must be at least 1");
  require(l.tol > 0.0, ErrorKind::kConfig, "learner.tol must be positive");
  require(l.init_lo <= l.init_hi, ErrorKind::kConfig, "learner.init_lo must not exceed learner.init_hi");
  require(l.retries >= 0, ErrorKind::kConfig, "learner.retries must be non-negative");
  require(l.basis_scale > 0.0, ErrorKind::kConfig, "learner.basis_scale must be positive");
  require(c.safety.mu > 0.0, ErrorKind::kConfig, "safety.mu must be positive");
  require(c.safety.state.barrier.kappa > 0.0 && c.safety.control.kappa > 0.0, ErrorKind::kConfig,
          "safety kappa values must be positive");
  require(c.safety.control.bound(0) > 0.0 && c.safety.control.bound(1) > 0.0, ErrorKind::kConfig,
          "safety.control_bound must be positive");
  require(c.safety.pairs == "none" || c.safety.pairs == "neighbors" || c.safety.pairs == "all", ErrorKind::kConfig,
          "safety.pairs must be none, neighbors or all");
  if (c.envelope.enabled) Envelope(c.envelope.mode, c.envelope.rho, c.envelope.scale);
  require(c.training.episodes >= 1, ErrorKind::kConfig, "training.episodes must be at least 1");
  require(!c.bench.robots.empty() && c.bench.steps >= 1, ErrorKind::kConfig,
          "bench needs at least one robot count and one step");
  for (int m : c.bench.robots) require(m >= 1, ErrorKind::kConfig, "bench.robots entries must be positive");
  require(c.baseline.max_iter >= 0, ErrorKind::kConfig, "baseline.max_iter must be non-negative");
}

std::uint64_t scenario_seed(std::uint64_t seed) { return splitmix64(seed); }
std::uint64_t learner_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x5851f42d4c957f2dULL); }

GraphSpec build_graph(const ScenarioConfig& s) {
  const int m = s.robots;
  GraphSpec g;
  g.robots = m;
  const bool grid = s.shape == "grid" || s.graph == "row_paths" || s.pinning == "row_heads";
  int cols = m;
  if (grid) {
    require(m % s.rows == 0, ErrorKind::kConfig, "scenario.robots must be a multiple of scenario.rows");
    cols = m / s.rows;
  }
  if (s.shape == "line") {
    g.slots = line_slots(m, s.spacing);
  } else if (s.shape == "grid") {
    g.slots = grid_slots(s.rows, cols, s.spacing, s.row_spacing);
  } else if (s.shape == "circle") {
    g.slots = circle_slots(m, s.spacing);
  } else {
    require(static_cast<int>(s.slots.size()) == m, ErrorKind::kConfig, "scenario.slots needs one entry per robot");
    g.slots = s.slots;
  }
  if (s.graph == "path") {
    g.neighbors = path_graph(m);
  } else if (s.graph == "ring") {
    g.neighbors = ring_graph(m);
  } else if (s.graph == "directed_ring") {
    g.neighbors = directed_ring_graph(m);
  } else if (s.graph == "row_paths") {
    g.neighbors = row_paths_graph(s.rows, cols);
  } else {
    require(static_cast<int>(s.adjacency.size()) == m, ErrorKind::kConfig,
            "scenario.adjacency needs one neighbor list per robot");
    g.neighbors = s.adjacency;
  }
  if (s.pinning == "all") {
    for (int i = 0; i < m; ++i) g.pinned.push_back(i);
  } else if (s.pinning == "first") {
    g.pinned.push_back(0);
  } else if (s.pinning == "row_heads") {
    for (int r = 0; r < s.rows; ++r) g.pinned.push_back(r * cols);
  } else {
    g.pinned = s.pinned;
  }
  return g;
}

Scenario build_scenario(const RunConfig& cfg, int robots_override) {
  ScenarioConfig s = cfg.scenario;
  if (robots_override > 0) s.robots = robots_override;
  Scenario sc;
  sc.topo = Topology::build(build_graph(s));
  sc.leader = s.leader;
  sc.disorder = s.disorder;
  sc.safety = cfg.safety;
  sc.safety.enabled = cfg.mode == "safe";
  sc.safety.state.obstacles = s.obstacles;
  sc.eps_w = s.eps_w;
  sc.steps = s.steps;
  sc.dt = s.dt;
  sc.seed = scenario_seed(cfg.seed);
  return sc;
}

RunOptions build_options(const RunConfig& cfg, const Scenario& sc, RunMode mode) {
  RunOptions opt;
  opt.mode = mode;
  const ObjectiveConfig& o = cfg.objective;
  const ObjectiveSpec base = ObjectiveSpec::defaults(sc.topo, o.q_scale, o.r_scale, o.horizon, o.beta);
  const PreparedObjective prep =
      prepare_objective(sc.topo, base, sc.safety, sc.leader.speed, sc.dt, o.terminal);
  opt.objective = prep.objective;
  opt.tail_gains = prep.gains.k;
  opt.learner = cfg.learner;
  opt.learner.seed = learner_seed(cfg.seed);
  opt.parallel = cfg.learner.parallel;
  opt.use_envelope = cfg.envelope.enabled;
  if (cfg.envelope.enabled) opt.envelope = Envelope(cfg.envelope.mode, cfg.envelope.rho, cfg.envelope.scale);
  opt.faults = cfg.faults;
  opt.baseline = cfg.baseline;
  return opt;
}

Policy WeightsFile::policy() const {
  Policy p;
  p.actor_basis = actor_basis;
  for (const auto& n : nets) {
    p.wa.push_back(n.wa);
    if (n.safe()) {
      p.wa2.push_back(n.wa2);
      p.wa3.push_back(n.wa3);
    }
  }
  return p;
}

WeightsFile make_weights(const Topology& topo, const Basis& actor, const Basis& critic,
                         const std::vector<RobotNets>& nets) {
  require(static_cast<int>(nets.size()) == topo.size(), ErrorKind::kInvalidArgument,
          "weights need one entry per robot");
  WeightsFile w;
  w.graph = topo.spec();
  w.actor_basis = actor;
  w.critic_basis = critic;
  w.nets = nets;
  return w;
}

WeightsFile make_weights(const Topology& topo, const DistributedLearner& learner) {
  return make_weights(topo, learner.actor_basis(), learner.critic_basis(), learner.nets());
}

std::string dump_weights(const WeightsFile& w) {
  Json j;
  j["format"] = "dlpc-weights";
  j["version"] = 1;
  Json g;
  g["robots"] = w.graph.robots;
  g["neighbors"] = w.graph.neighbors;
  g["pinned"] = w.graph.pinned.empty() ? Json::array() : Json(w.graph.pinned);
  Json slots = Json::array();
  for (const auto& s : w.graph.slots) slots.push_back(vec2_json(s));
  g["slots"] = slots;
  Json edges = Json::array();
  for (const auto& [key, off] : w.graph.edge_offsets)
    edges.push_back(Json::array({key.first, key.second, off(0), off(1)}));
  g["edge_offsets"] = edges;
  Json lofs = Json::array();
  for (const auto& s : w.graph.leader_offsets) lofs.push_back(vec2_json(s));
  g["leader_offsets"] = lofs;
  j["graph"] = g;
  j["actor_basis"] = mat_json(w.actor_basis.v);
  j["critic_basis"] = mat_json(w.critic_basis.v);
  Json nets = Json::array();
  for (const auto& n : w.nets) {
    Json jn;
    jn["wc"] = mat_json(n.wc);
    jn["wa"] = mat_json(n.wa);
    jn["wc2"] = mat_json(n.wc2);
    jn["wa2"] = mat_json(n.wa2);
    jn["wa3"] = mat_json(n.wa3);
    nets.push_back(std::move(jn));
  }
  j["nets"] = nets;
  return j.dump() + "\n";
}

WeightsFile parse_weights(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("weights file is not valid JSON: ") + e.what());
  }
  WeightsFile w;
  Reader r(j, "weights");
  std::string format;
  r.get("format", format);
  require(format == "dlpc-weights", ErrorKind::kConfig, "weights file has an unknown format tag");
  int version = 0;
  r.get("version", version);
  require(version == 1, ErrorKind::kConfig, "unsupported weights file version");
  {
    Reader g = r.child("graph");
    g.get("robots", w.graph.robots);
    g.get("neighbors", w.graph.neighbors);
    g.get("pinned", w.graph.pinned);
    g.get("slots", w.graph.slots);
    if (g.has("edge_offsets")) {
      const Json& e = g.raw("edge_offsets");
      require(e.is_array(), ErrorKind::kConfig, "weights.graph.edge_offsets must be an array");
      for (const auto& x : e) {
        require(x.is_array() && x.size() == 4, ErrorKind::kConfig, "edge offset entries are [i, j, x, y]");
        w.graph.edge_offsets[{x[0].get<int>(), x[1].get<int>()}] = Vec2(x[2].get<double>(), x[3].get<double>());
      }
    }
    g.get("leader_offsets", w.graph.leader_offsets);
    g.finish();
  }
  const Mat av = mat_from(r.raw("actor_basis"), "weights.actor_basis");
  const Mat cv = mat_from(r.raw("critic_basis"), "weights.critic_basis");
  require(av.rows() == 4 && av.cols() == 4 && cv.rows() == 4 && cv.cols() == 4, ErrorKind::kConfig,
          "basis matrices must be 4 x 4");
  w.actor_basis.v = av;
  w.critic_basis.v = cv;
  const Json& nets = r.raw("nets");
  require(nets.is_array() && static_cast<int>(nets.size()) == w.graph.robots, ErrorKind::kConfig,
          "weights.nets needs one entry per robot");
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const std::string p = "weights.nets[" + std::to_string(i) + "]";
    Reader n(nets[i], p);
    RobotNets rn;
    rn.wc = mat_from(n.raw("wc"), p + ".wc");
    rn.wa = mat_from(n.raw("wa"), p + ".wa");
    rn.wc2 = mat_from(n.raw("wc2"), p + ".wc2");
    rn.wa2 = mat_from(n.raw("wa2"), p + ".wa2");
    rn.wa3 = mat_from(n.raw("wa3"), p + ".wa3");
    n.finish();
    w.nets.push_back(std::move(rn));
  }
  r.finish();
  const Topology topo = Topology::build(w.graph);
  for (int i = 0; i < topo.size(); ++i) {
    const int nn = topo.neighborhood_dim(i);
    const RobotNets& n = w.nets[i];
    require(n.wc.rows() == nn && n.wc.cols() == nn && n.wa.rows() == nn && n.wa.cols() == 2, ErrorKind::kConfig,
            "weights of robot " + std::to_string(i) + " do not match its neighborhood");
    if (n.safe())
      require(n.wa2.rows() == nn && n.wa2.cols() == 2 && n.wa3.rows() == 2 && n.wa3.cols() == 2, ErrorKind::kConfig,
              "barrier weights of robot " + std::to_string(i) + " do not match its neighborhood");
  }
  return w;
}

void save_weights(const std::string& path, const WeightsFile& w) { write_text_file(path, dump_weights(w)); }

WeightsFile load_weights(const std::string& path) { return parse_weights(read_text_file(path)); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  require(!in.bad(), ErrorKind::kIo, "cannot read '" + path + "'");
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write '" + path + "'");
  out << text;
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing '" + path + "'");
}

}  // namespace dlpc
