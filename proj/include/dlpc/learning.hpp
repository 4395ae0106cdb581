#pragma once

#include "dlpc/common.hpp"
#include "dlpc/dynamics.hpp"
#include "dlpc/objective.hpp"
#include "dlpc/safety.hpp"
#include "dlpc/topology.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace dlpc {

/// Single hidden tanh layer applied blockwise: sigma(e_N) = col_j tanh(V e_j).
/// V is fixed; only the output weights are trained.
struct Basis {
  Mat4 v = Mat4::Identity();

  Vec eval(const Vec& e_nbr) const;
  void eval(const Vec& e_nbr, Vec& out) const;
  /// Random orthogonal matrix scaled by `scale`, drawn from rng.
  static Basis random(std::mt19937_64& rng, double scale);
};

/// Trainable weights of one robot. The barrier blocks are empty in unconstrained mode.
struct RobotNets {
  Mat wc;   ///< 4|N_i| x 4|N_i| critic weights on sigma_c
  Mat wa;   ///< 4|N_i| x 2 actor weights on sigma_a
  Mat wc2;  ///< 4|N_i| x 4|N_i| critic weights on grad B_e
  Mat wa2;  ///< 4|N_i| x 2 actor weights on grad B_e
  Mat wa3;  ///< 2 x 2 actor weights on grad B_nu

  bool safe() const { return wc2.size() > 0; }
  double distance(const RobotNets& o) const;
};

enum class CriticGradient {
  kFull,  ///< includes the dependence of the costate target on the weights
  kSemi,  ///< treats the target as a constant
};

struct LearnerConfig {
  double gamma_c = 0.4;
  double gamma_a = 0.2;
  SafeRates safe_rates;
  int t_max = 30;
  double tol = 1e-4;
  std::uint64_t seed = 1;
  double init_lo = 0.0;
  double init_hi = 0.1;
  int retries = 5;
  CriticGradient critic_gradient = CriticGradient::kSemi;
  double basis_scale = 0.5;
  /// Halve the offending rate before any update whose monitor reaches 1 (kept for the rest of the run).
  bool halve_on_violation = true;
  bool parallel = true;
};

CriticGradient parse_critic_gradient(const std::string& s);
std::string to_string(CriticGradient g);

// ---- Per-step building blocks (pure functions) -----------------------------

/// Stacked Jacobian A_i (4|N_i| x 4|N_i|): block row j in N_i holds the
/// derivative of e_j(tau+1) with respect to the blocks of e_N_i that robot j
/// also observes. `jac[j]` is robot j's own state Jacobian on e_N_j.
Mat neighborhood_jacobian(const Topology& topo, int i, const std::vector<Mat>& jac);

/// lambda^d = 2 Q e_N + mu grad B_e + A_i^T lambda_hat_i(tau+1).
Vec costate_target(const Vec& e_nbr, const Mat& q, const Mat& a_stack, const Vec& lambda_next,
                   const Vec* barrier_grad = nullptr, double mu = 0.0);
/// u_o^d = -g_i(e_i)^T sum_{j in Nbar_i} lambda_hat_j^[i](tau+1).
Vec2 action_target(const Mat42& g, const Vec4& costate_sum);
/// d|eps_c|^2/dW_c = -2 sigma eps^T + 2 sigma^+ eps^T A_i^T (full) or the first term only (semi).
Mat critic_gradient(const Vec& sigma, const Vec& sigma_next, const Vec& eps, const Mat& a_stack, CriticGradient mode);
/// d|eps_a|^2/dW_a = -2 sigma eps^T (2R).
Mat actor_gradient(const Vec& sigma, const Vec2& eps, const Mat2& r);
/// Gamma_c(z) = |z|^2 - 2|z^T z^+| |f| + |z^+|^2 |f|^2.
double gamma_c(const Vec& z, const Vec& z_next, double fnorm);

/// Convergence monitors collected over one interval.
struct ConvergenceMonitor {
  std::vector<double> cc;  ///< per-robot max C_c,i over the interval
  std::vector<double> ca;  ///< per-robot max C_a,i over the interval
  double err = 0.0;        ///< last weight-change norm
  int sweeps = 0;
  bool flagged = false;    ///< some C >= 1 was seen
  double cc_max() const;
  double ca_max() const;
};

/// Snapshot of the world the learner needs for one interval.
struct WorldSnapshot {
  Field e;                               ///< formation errors at k
  std::vector<RobotState> states;        ///< physical states at k (only read in safe mode)
  std::vector<LeaderSignal> leader;      ///< leader reference for tau = k..k+N
};

/// Result of one learning interval.
struct IntervalReport {
  std::vector<Vec2> u;      ///< first actions u_i(k)
  double cost = 0.0;        ///< J(e(k)) from the nominal rollout with the learned policy
  int retries = 0;          ///< re-initializations triggered by the stability check
  ConvergenceMonitor monitor;
  std::vector<std::string> warnings;
};

/// Actor-only explicit policy, usable for deployment on any topology with compatible blocks.
struct Policy {
  Basis actor_basis;
  std::vector<Mat> wa;
  std::vector<Mat> wa2;
  std::vector<Mat> wa3;

  bool safe() const { return !wa2.empty(); }
  /// u_i = W_a^T sigma_a(e_N) (+ barrier force terms when safe).
  Vec2 action(int i, const Vec& e_nbr, const Vec* grad_be = nullptr, const BoxBarrier* box = nullptr) const;
};

/// Builds W_a,i for a target topology by block replication: the own block
/// takes w1 and every other neighbor block takes w2, both read from robot
/// `source_robot` of the source policy on the source topology.
Policy deploy_policy(const Policy& source, const Topology& source_topo, int source_robot, const Topology& target);

/// The distributed incremental actor-critic learner.
class DistributedLearner {
 public:
  DistributedLearner(const Topology& topo, const ObjectiveSpec& objective, const LearnerConfig& config,
                     const SafetySpec& safety, double dt);

  /// Runs the sweeps of one prediction interval, the stability check, and the
  /// bounded re-initialization loop. `stable` receives J(e(k)) and returns
  /// whether it satisfies the envelope; a null callback always passes.
  IntervalReport learn_interval(const WorldSnapshot& world, const std::function<bool(double)>& stable);

  /// One forward sweep over tau = k..k+N-1 with synchronized updates. Returns Err.
  double sweep(const WorldSnapshot& world, ConvergenceMonitor& mon);
  /// J(e(k)) of the nominal rollout under the current actor.
  double rollout_cost(const WorldSnapshot& world) const;
  /// Current actions at the snapshot time.
  std::vector<Vec2> actions(const WorldSnapshot& world) const;

  /// Redraws all weights uniformly in the init range.
  void reinitialize();

  const std::vector<RobotNets>& nets() const { return nets_; }
  std::vector<RobotNets>& mutable_nets() { return nets_; }
  const Basis& actor_basis() const { return basis_a_; }
  const Basis& critic_basis() const { return basis_c_; }
  void set_bases(const Basis& actor, const Basis& critic);
  Policy policy() const;
  const Topology& topology() const { return topo_; }
  const LearnerConfig& config() const { return cfg_; }
  double rate_c(int i) const { return rate_c_[i]; }
  double rate_a(int i) const { return rate_a_[i]; }
  int total_reinitializations() const { return reinit_count_; }

 private:
  struct Work;
  void features(int i, const Vec& e_nbr, const std::vector<RobotState>* states, const LeaderSignal& leader,
                Vec& sa, Vec& sc, Vec& gbe, double* barrier_value) const;
  Vec2 actor_output(int i, const Vec& sa, const Vec& gbe, Vec2* nu, Vec2* gbnu) const;

  Topology topo_;
  ObjectiveSpec obj_;
  LearnerConfig cfg_;
  SafetySpec safety_;
  double dt_;
  std::mt19937_64 rng_;
  Basis basis_a_;
  Basis basis_c_;
  std::vector<RobotNets> nets_;
  std::vector<LocalModel> models_;
  std::vector<double> rate_c_;
  std::vector<double> rate_a_;
  SafeRates base_safe_;
  std::vector<SafeRates> safe_rates_;
  std::vector<int> halvings_;  ///< per-robot updates whose rates were halved in the current interval
  int reinit_count_ = 0;
};

}  // namespace dlpc
