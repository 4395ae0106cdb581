#pragma once

#include "dlpc/baseline.hpp"
#include "dlpc/common.hpp"
#include "dlpc/learning.hpp"
#include "dlpc/objective.hpp"
#include "dlpc/safety.hpp"
#include "dlpc/sim.hpp"
#include "dlpc/topology.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dlpc {

/// Team layout, leader motion and run length.
struct ScenarioConfig {
  int robots = 2;
  /// Formation shape: "line", "grid", "circle" or "explicit" (uses `slots`).
  std::string shape = "line";
  double spacing = 1.0;      ///< line spacing, circle arc spacing, or in-row spacing of the grid
  int rows = 1;              ///< grid rows; robots must be a multiple of it
  double row_spacing = 2.0;  ///< grid distance between rows
  std::vector<Vec2> slots;
  /// Communication graph: "path", "ring", "directed_ring", "row_paths" or "explicit" (uses `adjacency`).
  std::string graph = "path";
  std::vector<std::vector<int>> adjacency;
  /// Pinning: "all", "first", "row_heads" (first robot of every grid row) or "explicit" (uses `pinned`).
  std::string pinning = "all";
  std::vector<int> pinned;
  LeaderSpec leader;
  InitialDisorder disorder;
  std::vector<Obstacle> obstacles;
  double eps_w = 0.0;
  int steps = 400;
  double dt = 0.05;
};

struct ObjectiveConfig {
  double q_scale = 1.0;
  double r_scale = 0.5;
  int horizon = 20;
  double beta = 1.1;
  TerminalOptions terminal;
};

struct EnvelopeConfig {
  bool enabled = false;
  EnvelopeMode mode = EnvelopeMode::kGeometric;
  double rho = 0.995;
  double scale = 1.0;
};

struct TrainingConfig {
  int episodes = 1;
};

struct DeployConfig {
  std::string weights;   ///< weights file written by a learn run
  int source_robot = 0;  ///< robot whose blocks are replicated onto the target team
};

struct BenchConfig {
  std::vector<int> robots{10, 100, 1000};
  int steps = 20;
};

/// Everything a CLI run needs. All randomness is derived from `seed`.
struct RunConfig {
  std::uint64_t seed = 1;
  /// "safe" enables the barrier terms, "unconstrained" disables them.
  std::string mode = "unconstrained";
  std::string output_dir = "out";
  ScenarioConfig scenario;
  ObjectiveConfig objective;
  LearnerConfig learner;
  SafetySpec safety;
  EnvelopeConfig envelope;
  FaultInjection faults;
  OpenLoopOptions baseline;
  TrainingConfig training;
  DeployConfig deploy;
  BenchConfig bench;
};

/// Parses a JSON config. Missing keys keep their defaults; unknown keys,
/// wrong types and invalid values raise kConfig with the offending key path.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Fully resolved config with every default explicit. Parsing the result
/// yields a config that serializes to the identical string.
std::string dump_config(const RunConfig& cfg);

/// Checks cross-field consistency (shape vs robot count, mode names, ranges).
void validate_config(const RunConfig& cfg);

/// Seeds of the independent random streams derived from the config seed.
std::uint64_t scenario_seed(std::uint64_t seed);
std::uint64_t learner_seed(std::uint64_t seed);

/// Graph description of the scenario (slots, neighbors, pinning).
GraphSpec build_graph(const ScenarioConfig& sc);
/// Scenario for the config, optionally with a different robot count.
Scenario build_scenario(const RunConfig& cfg, int robots_override = 0);
/// Run options with the prepared terminal penalty, learner seed and envelope.
RunOptions build_options(const RunConfig& cfg, const Scenario& sc, RunMode mode);

/// Trained weights with everything needed to deploy or resume them.
struct WeightsFile {
  GraphSpec graph;
  Basis actor_basis;
  Basis critic_basis;
  std::vector<RobotNets> nets;

  Policy policy() const;
};
WeightsFile make_weights(const Topology& topo, const DistributedLearner& learner);
WeightsFile make_weights(const Topology& topo, const Basis& actor, const Basis& critic,
                         const std::vector<RobotNets>& nets);
std::string dump_weights(const WeightsFile& w);
WeightsFile parse_weights(const std::string& text);
void save_weights(const std::string& path, const WeightsFile& w);
/// Raises kIo when the file is missing or unreadable and kConfig when it is malformed.
WeightsFile load_weights(const std::string& path);

/// Reads a whole text file (kIo on failure).
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace dlpc
