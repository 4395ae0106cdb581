#include "doctest.h"

#include "dlpc/baseline.hpp"
#include "dlpc/sim.hpp"

#include <cmath>
#include <random>

using namespace dlpc;

namespace {

Topology pinned_path(int m) {
  GraphSpec g;
  g.robots = m;
  g.neighbors = path_graph(m);
  for (int i = 0; i < m; ++i) g.pinned.push_back(i);
  g.slots = line_slots(m, 1.0);
  return Topology::build(g);
}

std::vector<LeaderSignal> straight_leader(int n) {
  LeaderSpec ls;
  ls.start = {0.0, 0.0, 0.0, 1.0};
  return leader_trajectory(ls, n, 0.05);
}

Field disorder(int m, std::uint64_t seed, double amp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  Field e(4, m);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < 4; ++k) e(k, i) = u(rng);
  return e;
}

/// Optimal finite-horizon cost e0^T X_0 e0 of the stacked linear system,
/// computed with the backward Riccati recursion.
double lqr_cost(const Topology& t, const ObjectiveSpec& obj, const std::vector<Linearization>& lin, const Field& e0) {
  const int m = t.size();
  const Mat a = [&] {
    std::vector<Mat> rows;
    for (const auto& l : lin) rows.push_back(l.a);
    return assemble_global(t, rows);
  }();
  const Mat b = assemble_global_input(t, lin);
  Mat qg = Mat::Zero(4 * m, 4 * m);
  Mat rg = Mat::Zero(2 * m, 2 * m);
  Mat pg = Mat::Zero(4 * m, 4 * m);
  for (int i = 0; i < m; ++i) {
    const auto& nb = t.neighbors(i);
    for (std::size_t x = 0; x < nb.size(); ++x)
      for (std::size_t y = 0; y < nb.size(); ++y)
        qg.block<4, 4>(4 * nb[x], 4 * nb[y]) += obj.robots[i].q.block<4, 4>(4 * x, 4 * y);
    rg.block<2, 2>(2 * i, 2 * i) = obj.robots[i].r;
    pg.block<4, 4>(4 * i, 4 * i) = obj.robots[i].p;
  }
  Mat x = pg;
  for (int k = 0; k < obj.horizon; ++k) {
    const Mat bx = b.transpose() * x;
    x = qg + a.transpose() * x * a - a.transpose() * x * b * (rg + bx * b).ldlt().solve(bx * a);
    x = 0.5 * (x + x.transpose());
  }
  const Vec v = Eigen::Map<const Vec>(e0.data(), 4 * m);
  return v.dot(x * v);
}

}  // namespace

TEST_CASE("adjoint plan gradient matches central differences on the nonlinear model") {
  const Topology t = pinned_path(3);
  ObjectiveSpec obj = ObjectiveSpec::defaults(t);
  obj.horizon = 8;
  const auto leader = straight_leader(9);
  const Field e0 = disorder(3, 2, 0.4);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  ControlPlan plan = zero_plan(8, 3);
  for (auto& p : plan)
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) p(r, c) = u(rng);
  double cost = 0.0;
  const ControlPlan g = plan_gradient(t, obj, e0, plan, leader, 0.05, false, &cost);
  CHECK(cost == doctest::Approx(plan_cost(t, obj, e0, plan, leader, 0.05)));
  for (int s = 0; s < 8; ++s)
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) {
        ControlPlan pp = plan, pm = plan;
        pp[s](r, c) += 1e-6;
        pm[s](r, c) -= 1e-6;
        const double fd = (plan_cost(t, obj, e0, pp, leader, 0.05) - plan_cost(t, obj, e0, pm, leader, 0.05)) / 2e-6;
        CHECK(std::abs(fd - g[s](r, c)) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }
}

TEST_CASE("linearized open-loop optimum equals the finite-horizon LQR cost") {
  const Topology t = pinned_path(3);
  ObjectiveSpec obj = ObjectiveSpec::defaults(t);
  obj.horizon = 10;
  const auto leader = straight_leader(11);
  const Field e0 = disorder(3, 4, 0.3);
  OpenLoopOptions o;
  o.linearized = true;
  o.max_iter = 20000;
  o.grad_tol = 1e-11;
  const OpenLoopResult res = solve_open_loop(t, obj, e0, leader, 0.05, o);
  const double oracle = lqr_cost(t, obj, linearize_origin(t, 1.0, 0.0, 0.05), e0);
  CHECK(res.cost == doctest::Approx(oracle).epsilon(1e-7));
}

TEST_CASE("projected baseline respects the control box") {
  const Topology t = pinned_path(2);
  const ObjectiveSpec obj = ObjectiveSpec::defaults(t);
  const auto leader = straight_leader(21);
  const Field e0 = disorder(2, 8, 1.0);
  OpenLoopOptions o;
  o.bound = Vec2(0.05, 0.05);
  const OpenLoopResult res = solve_open_loop(t, obj, e0, leader, 0.05, o);
  for (const auto& p : res.u) CHECK(p.cwiseAbs().maxCoeff() <= 0.05 + 1e-15);
  const OpenLoopResult free = solve_open_loop(t, obj, e0, leader, 0.05, OpenLoopOptions{});
  CHECK(free.cost <= res.cost);
  CHECK(free.cost < plan_cost(t, obj, e0, zero_plan(20, 2), leader, 0.05));
}

TEST_CASE("geometric envelope and stability checks") {
  Envelope env(EnvelopeMode::kGeometric, 0.9, 2.0);
  CHECK(!env.initialized());
  env.reset(5.0);
  CHECK(env.bound(0) == doctest::Approx(10.0));
  CHECK(env.bound(2) == doctest::Approx(10.0 * 0.81));
  CHECK(stability_check(8.1, env.bound(2)));
  CHECK(!stability_check(8.2, env.bound(2)));
  Envelope tail(EnvelopeMode::kShiftedTail, 0.9, 1.0);
  tail.push(3.0);
  CHECK(tail.bound(7) == 3.0);
  CHECK(parse_envelope_mode(to_string(EnvelopeMode::kShiftedTail)) == EnvelopeMode::kShiftedTail);
}

TEST_CASE("distributed relaxation lets robots trade slack") {
  CHECK(distributed_stability_check({1.0, 3.0}, {2.0, 2.0}, {-1.0, 1.0}));
  CHECK(!distributed_stability_check({1.0, 3.0}, {2.0, 2.0}, {0.0, 1.0}));
  CHECK(!distributed_stability_check({1.0, 3.0}, {2.0, 2.0}, {-0.5, 0.5}));
  CHECK_THROWS_AS(distributed_stability_check({1.0}, {1.0, 2.0}, {0.0}), Error);
}

TEST_CASE("shifted plans keep their prefix and extend with the tail gain") {
  const Topology t = pinned_path(2);
  const auto leader = straight_leader(6);
  const Field e0 = disorder(2, 1, 0.2);
  ControlPlan u = zero_plan(4, 2);
  for (int s = 0; s < 4; ++s) u[s].setConstant(0.1 * (s + 1));
  const std::vector<Mat> k(2, Mat::Zero(2, 8));
  const ControlPlan sh = shift_plan(t, u, e0, leader, 0.05, k);
  REQUIRE(sh.size() == 4);
  for (int s = 0; s < 3; ++s) CHECK((sh[s] - u[s + 1]).norm() == 0.0);
  CHECK(sh[3].norm() == 0.0);
}
