#pragma once

#include "dlpc/baseline.hpp"
#include "dlpc/common.hpp"
#include "dlpc/dynamics.hpp"
#include "dlpc/learning.hpp"
#include "dlpc/objective.hpp"
#include "dlpc/safety.hpp"
#include "dlpc/topology.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dlpc {

enum class LeaderProfile { kHover, kRamp, kConstant, kArc };
LeaderProfile parse_leader_profile(const std::string& s);
std::string to_string(LeaderProfile p);

/// Scripted motion of the virtual leader.
struct LeaderSpec {
  LeaderProfile profile = LeaderProfile::kConstant;
  RobotState start;
  double speed = 1.0;      ///< cruise speed (m/s)
  double ramp_time = 2.0;  ///< time to reach cruise speed from start.v in the ramp profile (s)
  double curvature = 0.0;  ///< path curvature of the arc profile (1/m)
};

/// Leader signals for steps 0..count-1, integrated with the unicycle Euler step.
std::vector<LeaderSignal> leader_trajectory(const LeaderSpec& spec, int count, double dt);

/// Uniform initial disorder around the formation slots.
struct InitialDisorder {
  double position = 0.0;  ///< half-width of the uniform position perturbation per axis (m)
  double heading = 0.0;   ///< half-width of the heading perturbation (rad)
  double speed = 0.0;     ///< half-width of the speed perturbation (m/s)
};

struct Scenario {
  Topology topo;
  LeaderSpec leader;
  /// Explicit initial states; when empty they are drawn around the slots.
  std::vector<RobotState> initial;
  InitialDisorder disorder;
  SafetySpec safety;
  double eps_w = 0.0;  ///< disturbance ball radius per robot state
  int steps = 100;
  double dt = 0.05;
  std::uint64_t seed = 1;
};

/// Initial states of a scenario (explicit ones, or slots plus seeded disorder).
std::vector<RobotState> initial_states(const Scenario& sc);

enum class RunMode { kLearn, kDeploy, kBaseline };
RunMode parse_run_mode(const std::string& s);
std::string to_string(RunMode m);

/// Inflates the learned cost seen by the stability check at the listed steps
/// (first evaluation of the step only), which exercises the re-initialization path.
struct FaultInjection {
  std::vector<int> steps;
  double factor = 1e6;
};

struct RunOptions {
  RunMode mode = RunMode::kLearn;
  ObjectiveSpec objective;
  LearnerConfig learner;
  Policy policy;                 ///< deploy mode
  /// Warm-start weights for learn mode (for example from an earlier episode); empty means random init.
  std::vector<RobotNets> initial_nets;
  bool use_envelope = false;     ///< run the stability check in learn mode
  Envelope envelope;
  FaultInjection faults;
  OpenLoopOptions baseline;
  std::vector<Mat> tail_gains;   ///< K_i used to extend shifted baseline plans
  double divergence = 1e3;       ///< |e|_inf threshold that ends the run
  bool parallel = true;
};

struct StepRecord {
  int k = 0;
  double stage = 0.0;    ///< sum_i r_i(k)
  double j = 0.0;        ///< J(e(k)) of the policy used at step k
  double jb = 0.0;       ///< envelope bound (NaN when not checked)
  bool check_ok = true;
  int retries = 0;
  int sweeps = 0;
  double cc_max = 0.0;
  double ca_max = 0.0;
  double wall = 0.0;     ///< seconds spent computing the controls of this step
};

struct ViolationEvent {
  int k = 0;
  int robot = 0;
  std::string kind;  ///< "state" or "control"
  int id = 0;        ///< constraint index (obstacles first, then other robots) or control channel
  double value = 0.0;
};

struct RunRecord {
  int robots = 0;
  double dt = 0.0;
  RunMode mode = RunMode::kLearn;
  std::vector<std::vector<RobotState>> states;  ///< states at the start of each step
  std::vector<Field> errors;
  std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> controls;
  std::vector<Eigen::VectorXd> robot_stage;     ///< r_i(k) per robot
  std::vector<StepRecord> steps;
  std::vector<ViolationEvent> violations;
  std::vector<std::string> warnings;
  std::vector<RobotState> final_states;
  Field final_error;
  bool diverged = false;
  std::string status = "ok";
  int reinitializations = 0;
  int check_failures = 0;
  Policy final_policy;
  Basis critic_basis;
  std::vector<RobotNets> final_nets;

  /// V = sum over steps of the team stage cost.
  double cumulative_cost() const;
  /// max_i |e_i| at the state reached after the last step.
  double terminal_error() const;
  /// Largest |e_i| over the last `window` recorded steps and the final state.
  double tail_error(int window) const;
  /// Mean of |e_x| and |e_y| over all steps and robots.
  double position_mae() const;
  /// Mean controller wall time per step.
  double mean_wall() const;
  double max_cc() const;
  double max_ca() const;

  /// One row per step per robot. Timing is the last column when included.
  std::string csv(bool include_timing = true) const;
  void write_csv(const std::string& path, bool include_timing = true) const;
  /// Machine-readable summary as a JSON string.
  std::string summary_json() const;
};

/// J(e(k)) of a fixed policy: nominal rollout over the horizon with the terminal quadratic.
double policy_rollout_cost(const Topology& topo, const ObjectiveSpec& obj, const Policy& policy,
                           const SafetySpec& safety, const Field& e0, const std::vector<RobotState>& states,
                           const std::vector<LeaderSignal>& leader, double dt);
/// Controls of a fixed policy at the current state.
std::vector<Vec2> policy_actions(const Topology& topo, const Policy& policy, const SafetySpec& safety,
                                 const Field& e, const std::vector<RobotState>& states, const LeaderSignal& leader,
                                 bool parallel);

/// Runs a closed loop and records it. Learning errors other than divergence propagate.
RunRecord run_closed_loop(const Scenario& sc, const RunOptions& opt);

/// Outcome of repeated learning episodes.
struct TrainingRun {
  RunRecord last;                ///< record of the final episode (its weights are the trained ones)
  std::vector<double> terminal;  ///< terminal error of each episode
  int reinitializations = 0;     ///< summed over all episodes
};
/// Runs `episodes` learn-mode episodes. Episode e uses scenario seed sc.seed + e,
/// and every episode after the first warm-starts from the weights the previous one ended with.
TrainingRun train_episodes(Scenario sc, RunOptions opt, int episodes);

/// Terminal penalty, gains and objective prepared for a scenario.
struct PreparedObjective {
  ObjectiveSpec objective;
  StabilizingGains gains;
  TerminalPenalty terminal;
};
PreparedObjective prepare_objective(const Topology& topo, ObjectiveSpec objective, const SafetySpec& safety,
                                    double v_r, double dt, const TerminalOptions& topt);

/// Coefficient of determination of the least-squares line through (x, y).
double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y, double* slope = nullptr,
                     double* intercept = nullptr);

struct ScalingRow {
  int robots = 0;
  double learn_s = 0.0;   ///< mean learn-mode controller time per step
  double deploy_s = 0.0;  ///< mean deploy-mode controller time per step
};
struct ScalingTable {
  std::vector<ScalingRow> rows;
  double learn_r2 = 0.0;
  double deploy_r2 = 0.0;
  double learn_slope = 0.0;
};

/// Builds a scenario for a given robot count.
using ScenarioFactory = std::function<Scenario(int robots, std::uint64_t seed)>;
/// Times learn and deploy steps for each robot count at fixed neighbor degree.
ScalingTable measure_scaling(const std::vector<int>& robots, ScenarioFactory factory, const RunOptions& base,
                             int steps, std::uint64_t seed);

/// Default measurement scenario: bidirectional path, every robot pinned, line slots at 1 m.
Scenario line_scenario(int robots, std::uint64_t seed);

}  // namespace dlpc
