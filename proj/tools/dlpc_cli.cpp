#include "dlpc/config.hpp"
#include "dlpc/sim.hpp"
#include "dlpc/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace dlpc;
using Json = nlohmann::ordered_json;

/// Process exit status for each failure category.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfigError = 3,
  kInvalidArgumentError = 4,
  kTopologyError = 5,
  kNumericalError = 6,
  kDivergenceError = 7,
  kRetryExhaustedError = 8,
  kIoError = 9,
  kVerificationFailed = 10,
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidArgument:
      return kInvalidArgumentError;
    case ErrorKind::kConfig:
      return kConfigError;
    case ErrorKind::kTopology:
      return kTopologyError;
    case ErrorKind::kNumerical:
      return kNumericalError;
    case ErrorKind::kDivergence:
      return kDivergenceError;
    case ErrorKind::kRetryExhausted:
      return kRetryExhaustedError;
    case ErrorKind::kIo:
      return kIoError;
    case ErrorKind::kVerification:
      return kVerificationFailed;
  }
  return kInternal;
}

struct Flags {
  std::string config;
  std::string out;
  std::string weights;
  std::string robots;
  std::string mode;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

std::vector<int> parse_robot_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      require(used == item.size() && v >= 1, ErrorKind::kConfig, "");
      out.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorKind::kConfig, "--robots expects positive integers separated by commas, got '" + s + "'");
    }
  }
  require(!out.empty(), ErrorKind::kConfig, "--robots is empty");
  return out;
}

/// Loads the config file (or the defaults) and applies the command-line overrides.
RunConfig resolve(const Flags& f, bool robots_is_list) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (f.seed_set) cfg.seed = f.seed;
  if (!f.mode.empty()) cfg.mode = f.mode;
  if (!f.robots.empty()) {
    const std::vector<int> r = parse_robot_list(f.robots);
    if (robots_is_list) {
      cfg.bench.robots = r;
    } else {
      require(r.size() == 1, ErrorKind::kConfig, "--robots takes a single count for this command");
      cfg.scenario.robots = r[0];
    }
  }
  validate_config(cfg);
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

void prepare_output(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create output directory '" + cfg.output_dir + "': " + ec.message());
  write_text_file(out_path(cfg, "resolved_config.json"), dump_config(cfg));
}

void write_terminal(const RunConfig& cfg, const RunOptions& opt) {
  Json ps = Json::array();
  for (const auto& r : opt.objective.robots) {
    Json p = Json::array();
    for (int a = 0; a < 4; ++a) p.push_back({r.p(a, 0), r.p(a, 1), r.p(a, 2), r.p(a, 3)});
    ps.push_back(std::move(p));
  }
  write_text_file(out_path(cfg, "terminal.json"), Json{{"p", ps}}.dump(2) + "\n");
}

void write_run(const RunConfig& cfg, const RunRecord& rec, Json extra) {
  rec.write_csv(out_path(cfg, "run.csv"));
  Json summary = Json::parse(rec.summary_json());
  for (auto it = extra.begin(); it != extra.end(); ++it) summary[it.key()] = it.value();
  write_text_file(out_path(cfg, "summary.json"), summary.dump(2) + "\n");
}

int finish_run(const RunRecord& rec) {
  std::cout << "status " << rec.status << ", terminal error " << rec.terminal_error() << ", violations "
            << rec.violations.size() << ", cost V " << rec.cumulative_cost() << "\n";
  if (rec.diverged) return kDivergenceError;
  if (rec.status != "ok") return kRetryExhaustedError;
  return kOk;
}

int cmd_learn(const Flags& f) {
  const RunConfig cfg = resolve(f, false);
  prepare_output(cfg);
  const Scenario sc = build_scenario(cfg);
  const RunOptions opt = build_options(cfg, sc, RunMode::kLearn);
  write_terminal(cfg, opt);
  const TrainingRun tr = train_episodes(sc, opt, cfg.training.episodes);
  const RunRecord& rec = tr.last;
  save_weights(out_path(cfg, "weights.json"),
               make_weights(sc.topo, rec.final_policy.actor_basis, rec.critic_basis, rec.final_nets));
  write_run(cfg, rec, Json{{"command", "learn"}, {"episodes", tr.terminal.size()},
                           {"episode_terminal_error", tr.terminal},
                           {"total_reinitializations", tr.reinitializations}});
  return finish_run(rec);
}

int cmd_deploy(const Flags& f) {
  const RunConfig cfg = resolve(f, false);
  const std::string wpath = f.weights.empty() ? cfg.deploy.weights : f.weights;
  require(!wpath.empty(), ErrorKind::kConfig, "deploy needs a weights file (deploy.weights or --weights)");
  const WeightsFile w = load_weights(wpath);
  prepare_output(cfg);
  const Scenario sc = build_scenario(cfg);
  RunOptions opt = build_options(cfg, sc, RunMode::kDeploy);
  write_terminal(cfg, opt);
  const Topology src = Topology::build(w.graph);
  const Policy pol = w.policy();
  require(!sc.safety.enabled || pol.safe(), ErrorKind::kConfig,
          "safe deployment needs weights trained with barrier terms");
  const bool same = src.size() == sc.topo.size() && w.graph.neighbors == sc.topo.spec().neighbors;
  opt.policy = same ? pol : deploy_policy(pol, src, cfg.deploy.source_robot, sc.topo);
  const RunRecord rec = run_closed_loop(sc, opt);
  write_run(cfg, rec, Json{{"command", "deploy"}, {"weights", wpath}, {"transferred", !same},
                           {"source_robots", src.size()}});
  return finish_run(rec);
}

int cmd_bench(const Flags& f) {
  const RunConfig cfg = resolve(f, true);
  prepare_output(cfg);
  const Scenario probe = build_scenario(cfg, cfg.bench.robots.front());
  const RunOptions base = build_options(cfg, probe, RunMode::kLearn);
  auto factory = [&cfg](int m, std::uint64_t) { return build_scenario(cfg, m); };
  const ScalingTable t = measure_scaling(cfg.bench.robots, factory, base, cfg.bench.steps, scenario_seed(cfg.seed));
  std::ostringstream csv;
  csv << "robots,learn_s,deploy_s\n";
  Json rows = Json::array();
  for (const auto& r : t.rows) {
    csv << r.robots << ',' << r.learn_s << ',' << r.deploy_s << '\n';
    rows.push_back({{"robots", r.robots}, {"learn_s", r.learn_s}, {"deploy_s", r.deploy_s}});
    std::cout << "M " << r.robots << ": learn " << r.learn_s << " s/step, deploy " << r.deploy_s << " s/step\n";
  }
  write_text_file(out_path(cfg, "bench.csv"), csv.str());
  write_text_file(out_path(cfg, "bench.json"),
                  Json{{"rows", rows}, {"learn_r2", t.learn_r2}, {"deploy_r2", t.deploy_r2},
                       {"learn_slope_s_per_robot", t.learn_slope}}
                          .dump(2) +
                      "\n");
  std::cout << "learn-time linear fit R^2 " << t.learn_r2 << "\n";
  return kOk;
}

int cmd_verify(const Flags& f) {
  const RunConfig cfg = resolve(f, false);
  prepare_output(cfg);
  const VerifyReport rep = run_invariant_suite(cfg);
  std::cout << rep.text();
  write_text_file(out_path(cfg, "verify.json"), rep.json());
  return rep.all_pass() ? kOk : kVerificationFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed learning-based predictive control for multirobot formations"};
  app.require_subcommand(1);
  Flags flags;
  auto add_common = [&flags](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON run configuration (defaults when omitted)");
    sub->add_option("--out", flags.out, "output directory (overrides output_dir)");
    sub->add_option("--seed", flags.seed, "seed override")->each([&flags](const std::string&) { flags.seed_set = true; });
    sub->add_option("--robots", flags.robots, "robot count override; a comma-separated list for bench");
    sub->add_option("--mode", flags.mode, "safe or unconstrained")->check(CLI::IsMember({"safe", "unconstrained"}));
  };
  CLI::App* learn = app.add_subcommand("learn", "train weights online and record the closed loop");
  CLI::App* deploy = app.add_subcommand("deploy", "run a trained policy, replicating blocks onto a new team");
  CLI::App* bench = app.add_subcommand("bench", "time learn and deploy steps across team sizes");
  CLI::App* verify = app.add_subcommand("verify", "run the invariant suite and report pass or fail");
  for (CLI::App* s : {learn, deploy, bench, verify}) add_common(s);
  deploy->add_option("--weights", flags.weights, "weights file (overrides deploy.weights)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  try {
    if (*learn) return cmd_learn(flags);
    if (*deploy) return cmd_deploy(flags);
    if (*bench) return cmd_bench(flags);
    if (*verify) return cmd_verify(flags);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
