#pragma once

#include "dlpc/config.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dlpc {

/// One invariant of the verification suite.
struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;      ///< measured quantity (error, residual or monitor maximum)
  double tolerance = 0.0;  ///< pass threshold for `value`
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_pass() const;
  /// One "PASS name value <= tol detail" line per check.
  std::string text() const;
  std::string json() const;
};

/// Relative error |a - b|_inf / max(|b|_inf, 1) used by every finite-difference check.
double fd_relative_error(const Mat& analytic, const Mat& numeric);

/// Individual checks. `samples` random points are drawn from `seed`.
CheckResult check_fixed_point(const Topology& topo, double v_r, double dt);
CheckResult check_dynamics_jacobian(const Topology& topo, double v_r, double dt, int samples, std::uint64_t seed);
CheckResult check_learning_gradients(int neighbors, int samples, std::uint64_t seed);
CheckResult check_barrier_gradients(const SafetySpec& safety, int samples, std::uint64_t seed);
CheckResult check_terminal_penalty(const Topology& topo, const ObjectiveSpec& base, const SafetySpec& safety,
                                   double v_r, double dt, const TerminalOptions& topt);
/// Learn-mode run checked for the convergence monitors and the geometric envelope.
std::vector<CheckResult> check_closed_loop(const RunConfig& cfg, int steps);

/// Full suite on the scenario described by the config.
VerifyReport run_invariant_suite(const RunConfig& cfg, int samples = 1000, int loop_steps = 200);

}  // namespace dlpc
