#include "doctest.h"

#include "dlpc/config.hpp"

#include <random>
#include <string>

using namespace dlpc;

namespace {

ErrorKind kind_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kVerification;
}

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("resolved config round-trips byte for byte") {
  const std::string text = R"({
    "seed": 42, "mode": "safe",
    "scenario": {"robots": 16, "shape": "grid", "rows": 4, "graph": "row_paths", "pinning": "row_heads",
                 "leader": {"x": -5.0, "y": 3.0, "speed": 1.0},
                 "obstacles": [{"center": [0.1, 2.0], "radius": 0.2}], "dt": 0.05, "eps_w": 0.01},
    "objective": {"terminal": {"method": "own_block"}},
    "learner": {"gamma_c": 0.3, "tol": 1e-5, "critic_gradient": "full"},
    "envelope": {"enabled": true, "rho": 0.99},
    "faults": {"steps": [3, 9]},
    "bench": {"robots": [5, 50]}
  })";
  const RunConfig a = parse_config(text);
  CHECK(a.seed == 42);
  CHECK(a.scenario.robots == 16);
  CHECK(a.learner.critic_gradient == CriticGradient::kFull);
  CHECK(a.objective.terminal.method == TerminalMethod::kOwnBlock);
  const std::string d1 = dump_config(a);
  const std::string d2 = dump_config(parse_config(d1));
  CHECK(d1 == d2);
  // Doubles that need all 17 digits survive the trip.
  RunConfig b;
  b.scenario.dt = 0.1 + 0.2;
  b.learner.gamma_c = 1.0 / 3.0;
  const RunConfig b2 = parse_config(dump_config(b));
  CHECK(b2.scenario.dt == b.scenario.dt);
  CHECK(b2.learner.gamma_c == b.learner.gamma_c);
  CHECK(dump_config(RunConfig{}) == dump_config(parse_config("{}")));
}

TEST_CASE("unknown keys and wrong types are config errors naming the key") {
  CHECK(kind_of(R"({"sede": 1})") == ErrorKind::kConfig);
  CHECK(message_of(R"({"sede": 1})").find("sede") != std::string::npos);
  CHECK(kind_of(R"({"learner": {"gamma": 0.1}})") == ErrorKind::kConfig);
  CHECK(message_of(R"({"learner": {"gamma": 0.1}})").find("learner.gamma") != std::string::npos);
  CHECK(kind_of(R"({"scenario": {"leader": {"spd": 1}}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"scenario": {"robots": "two"}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"scenario": {"robots": 2.5}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"mode": "reckless"})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"scenario": {"obstacles": [{"center": [1.0], "radius": 0.2}]}})") == ErrorKind::kConfig);
  CHECK(kind_of("{not json") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"scenario": {"robots": 6, "shape": "grid", "rows": 4}})") == ErrorKind::kConfig);
}

TEST_CASE("seed streams are distinct and stable") {
  CHECK(scenario_seed(1) == scenario_seed(1));
  CHECK(scenario_seed(1) != learner_seed(1));
  CHECK(scenario_seed(1) != scenario_seed(2));
}

TEST_CASE("graph builders") {
  ScenarioConfig s;
  s.robots = 6;
  s.shape = "grid";
  s.rows = 2;
  s.graph = "row_paths";
  s.pinning = "row_heads";
  const GraphSpec g = build_graph(s);
  CHECK(g.slots.size() == 6);
  CHECK(g.pinned == std::vector<int>{0, 3});
  CHECK(g.neighbors[2] == std::vector<int>{1});
  s.shape = "circle";
  s.graph = "ring";
  s.pinning = "first";
  const GraphSpec c = build_graph(s);
  CHECK(c.pinned == std::vector<int>{0});
  CHECK(c.neighbors[0].size() == 2);
}

TEST_CASE("weights round-trip exactly and malformed files are rejected") {
  RunConfig cfg;
  cfg.mode = "safe";
  const Scenario sc = build_scenario(cfg);
  CHECK(sc.safety.enabled);
  std::mt19937_64 rng(3);
  const Basis a = Basis::random(rng, 0.5);
  const Basis c = Basis::random(rng, 0.5);
  std::vector<RobotNets> nets(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    const int n = sc.topo.neighborhood_dim(i);
    nets[i].wc = Mat::NullaryExpr(n, n, [&] { return u(rng); });
    nets[i].wa = Mat::NullaryExpr(n, 2, [&] { return u(rng); });
    nets[i].wc2 = Mat::NullaryExpr(n, n, [&] { return u(rng); });
    nets[i].wa2 = Mat::NullaryExpr(n, 2, [&] { return u(rng); });
    nets[i].wa3 = Mat::NullaryExpr(2, 2, [&] { return u(rng); });
  }
  const WeightsFile w = make_weights(sc.topo, a, c, nets);
  const std::string text = dump_weights(w);
  const WeightsFile back = parse_weights(text);
  CHECK(dump_weights(back) == text);
  CHECK((back.actor_basis.v - a.v).norm() == 0.0);
  for (int i = 0; i < 2; ++i) {
    CHECK((back.nets[i].wc - nets[i].wc).norm() == 0.0);
    CHECK((back.nets[i].wa3 - nets[i].wa3).norm() == 0.0);
  }
  CHECK(back.policy().safe());
  std::string broken = text;
  broken.replace(broken.find("dlpc-weights"), 12, "other-format");
  CHECK_THROWS_AS(parse_weights(broken), Error);
  try {
    load_weights("/nonexistent/weights.json");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
}

TEST_CASE("options carry the derived learner seed and the envelope") {
  RunConfig cfg;
  cfg.seed = 9;
  cfg.envelope.enabled = true;
  const Scenario sc = build_scenario(cfg);
  CHECK(sc.seed == scenario_seed(9));
  const RunOptions o = build_options(cfg, sc, RunMode::kLearn);
  CHECK(o.learner.seed == learner_seed(9));
  CHECK(o.use_envelope);
  CHECK(o.tail_gains.size() == 2);
  CHECK(o.objective.robots[0].p.norm() > 0.0);
}
