// Per-robot parallel loop against the serial reference path, for learn-mode
// control steps and deploy-mode policy evaluation on a pinned line team.

#include "dlpc/config.hpp"
#include "dlpc/sim.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace dlpc;

struct Setup {
  Scenario sc;
  RunOptions opt;
};

Setup make_setup(int robots, bool parallel, RunMode mode, int steps) {
  RunConfig cfg;
  cfg.seed = 3;
  cfg.scenario.robots = robots;
  cfg.scenario.steps = steps;
  cfg.scenario.disorder = {0.3, 0.2, 0.1};
  cfg.learner.parallel = parallel;
  // Step timing does not depend on how P is certified, so skip the stacked search.
  cfg.objective.terminal.method = TerminalMethod::kLocalLyap;
  Setup s{build_scenario(cfg), {}};
  s.opt = build_options(cfg, s.sc, RunMode::kLearn);
  if (mode == RunMode::kDeploy) {
    s.opt.policy = run_closed_loop(s.sc, s.opt).final_policy;
    s.opt.mode = RunMode::kDeploy;
  }
  return s;
}

void run_steps(benchmark::State& state, bool parallel, RunMode mode) {
  const int robots = static_cast<int>(state.range(0));
  const int steps = 5;
  const Setup s = make_setup(robots, parallel, mode, steps);
  for (auto _ : state) {
    const RunRecord r = run_closed_loop(s.sc, s.opt);
    benchmark::DoNotOptimize(r.final_error.data());
  }
  state.counters["robot_steps/s"] =
      benchmark::Counter(static_cast<double>(robots) * steps, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_LearnParallel(benchmark::State& st) { run_steps(st, true, RunMode::kLearn); }
void BM_LearnSerial(benchmark::State& st) { run_steps(st, false, RunMode::kLearn); }
void BM_DeployParallel(benchmark::State& st) { run_steps(st, true, RunMode::kDeploy); }
void BM_DeploySerial(benchmark::State& st) { run_steps(st, false, RunMode::kDeploy); }

BENCHMARK(BM_LearnParallel)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LearnSerial)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeployParallel)->Arg(10)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeploySerial)->Arg(10)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
