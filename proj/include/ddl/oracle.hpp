#pragma once

#include <limits>
#include <string>
#include <vector>

#include "ddl/common.hpp"
#include "ddl/env.hpp"
#include "ddl/policy.hpp"

namespace ddl::oracle {

/// Marker for pairs that are never connected. Kept distinct from a
/// learner's d_max default.
inline constexpr double kUnreached = std::numeric_limits<double>::infinity();

inline bool reached(double d) { return d != kUnreached; }

class ExactDistanceTable {
 public:
  explicit ExactDistanceTable(int state_count);

  double operator()(StateId from, StateId to) const { return values_[index(from, to)]; }
  void set(StateId from, StateId to, double value) { values_[index(from, to)] = value; }
  double standard_error(StateId from, StateId to) const { return errors_[index(from, to)]; }
  void set_standard_error(StateId from, StateId to, double se) { errors_[index(from, to)] = se; }
  int state_count() const { return n_; }

  /// Column d(., to).
  std::vector<double> to_state(StateId to) const;

 private:
  std::size_t index(StateId from, StateId to) const;

  int n_;
  std::vector<double> values_;
  std::vector<double> errors_;
};

/// Action distribution per state: table[s][a].
using PolicyTable = std::vector<std::vector<double>>;

PolicyTable uniform_policy(const Environment& env);
PolicyTable deterministic_policy(const std::vector<ActionId>& actions, int action_count);
/// Snapshot of a learned policy's behaviour toward `goal`.
PolicyTable policy_table(const Policy& policy, StateId goal, bool greedy);
bool is_deterministic(const PolicyTable& policy);

/// All-pairs shortest step counts. Deterministic environments only.
ExactDistanceTable bfs_distance(const Environment& env);

/// Shortest step counts over the support of the transition kernel; equal
/// to bfs_distance on deterministic environments.
ExactDistanceTable support_bfs_distance(const Environment& env);

/// First-hitting gap from s to s' within `horizon` steps, conditioned on
/// s' being hit. Deterministic environment and policy: exact, one
/// simulation per start. Otherwise: `mc_samples` rollouts per start, with
/// the standard error recorded. Pairs never hit are kUnreached.
ExactDistanceTable exact_policy_distance(const Environment& env, const PolicyTable& policy,
                                         int horizon, int mc_samples, Rng& rng);

/// Expected steps from every state to `goal` conditioned on reaching it,
/// with no horizon: absorbing-chain linear algebra. kUnreached where the
/// hitting probability is zero.
std::vector<double> goal_distance(const Environment& env, const PolicyTable& policy, StateId goal);

/// Optimal action values for reward r(s) = -min(d(s), d_max) with the goal
/// terminal (value 0) and absorbing non-goal states worth r(s) / (1 - gamma).
/// Solved by value iteration on the exact model. Returned row-major [s][a].
std::vector<double> optimal_q(const Environment& env, StateId goal, const std::vector<double>& distance,
                              double d_max, double gamma);

/// Lowest-index argmax with a relative tie tolerance.
std::vector<ActionId> greedy_actions(const std::vector<double>& q, int state_count, int action_count);

struct PolicyIterationRound {
  std::vector<ActionId> policy;   // empty for a stochastic starting policy
  std::vector<double> distance;   // d^pi(., goal)
};

struct PolicyIterationResult {
  std::vector<PolicyIterationRound> rounds;
  std::vector<double> optimal;  // shortest-path distance to the goal
  bool converged = false;       // distances repeated between consecutive rounds
  bool monotone = true;         // d_{r+1} <= d_r everywhere, every round
  bool optimal_at_fixpoint = false;
  std::string violation;
};

/// Alternates exact distance evaluation and exact optimisation of the
/// cumulative-distance objective, checking pointwise monotonicity of the
/// distances and optimality at the fixpoint. `d_max` <= 0 means the
/// environment horizon.
PolicyIterationResult ddl_exact_policy_iteration(const Environment& env, StateId goal, double gamma,
                                                 int max_rounds, const PolicyTable& initial,
                                                 double d_max = 0.0);

struct Eq5Result {
  double lhs = 0.0;  // nested form
  double rhs = 0.0;  // collapsed form
  double diff = 0.0;
  double lhs_se = 0.0;
  double rhs_se = 0.0;
  bool exact = false;

  double combined_se() const;
};

/// Compares the nested objective -E[sum_t g^t E'[sum_k g^k c(s'_k) | s_t, a_t]]
/// with -E[sum_t g^t (t + 1) c(s_t)], where c is 0 on the goal and absorbing
/// states and 1 elsewhere, both truncated at `horizon` total steps.
/// Exact for deterministic environment and policy.
Eq5Result eq5_identity_check(const Environment& env, const PolicyTable& policy, StateId goal,
                             double gamma, int horizon, int mc_samples, Rng& rng);

struct BranchRow {
  double p = 0.0;
  ActionId greedy = 0;      // argmin of conditional distance at s0's afterstates
  ActionId cumulative = 0;  // argmax of optimal Q at s0 under reward -d
  double q_risky = 0.0;
  double q_safe = 0.0;
};

struct BranchAnalysis {
  std::vector<BranchRow> rows;
  double crossover = 1.0;  // cumulative objective prefers risky only for p > crossover
};

BranchRow pathological_branch_row(double p, double gamma, double d_max, int horizon);
BranchAnalysis pathological_branch_analysis(const std::vector<double>& p_grid, double gamma,
                                            double d_max, int horizon);

}  // namespace ddl::oracle
