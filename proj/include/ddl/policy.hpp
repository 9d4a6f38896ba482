#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ddl/common.hpp"
#include "ddl/distance.hpp"
#include "ddl/env.hpp"
#include "ddl/trajectory.hpp"

namespace ddl {

enum class PolicyKind { TabularQ, TabularSoftmax };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& text);

struct PolicyParams {
  PolicyKind kind = PolicyKind::TabularQ;
  double epsilon = 0.1;      // TabularQ: epsilon-greedy
  double temperature = 1.0;  // TabularSoftmax: Boltzmann temperature
  double learning_rate = 1.0;
  double q_init = 0.0;       // value of (state, action) pairs never backed up
};

/// Goal-conditioned tabular action values. Tables are created on first use
/// for each goal; with no goal the policy acts uniformly at random.
class Policy {
 public:
  Policy(int state_count, int action_count, PolicyParams params);

  const PolicyParams& params() const { return params_; }
  PolicyParams& params() { return params_; }
  int state_count() const { return states_; }
  int action_count() const { return actions_; }

  /// Lowest-index argmax of Q(s, goal, .).
  ActionId greedy_action(StateId s, StateId goal) const;
  std::vector<double> action_probabilities(StateId s, StateId goal) const;
  ActionId sample(StateId s, StateId goal, Rng& rng) const;

  std::vector<double> q_values(StateId s, StateId goal) const;
  bool has_goal(StateId goal) const { return tables_.count(goal) > 0; }
  std::vector<double>& table(StateId goal);
  const std::map<StateId, std::vector<double>>& tables() const { return tables_; }

  /// CSV: two `#` header lines with the exploration parameters, then
  /// `goal,state,action,q` rows.
  void save(std::ostream& out) const;
  static Policy load(std::istream& in);

 private:
  std::size_t index(StateId s, ActionId a) const;

  int states_;
  int actions_;
  PolicyParams params_;
  std::map<StateId, std::vector<double>> tables_;
};

struct RolloutConfig {
  int horizon = 1;
  double explore_switch_fraction = 0.9;  // uniform actions from floor(fraction * T) on
  bool stop_at_goal = true;
  bool greedy = false;                    // no exploration noise before the switch
  bool explore_after_goal = false;        // also switch once the goal is reached (needs stop_at_goal off)

  int switch_step() const;
};

using ActionSelector = std::function<ActionId(StateId state, Rng& rng)>;

/// One episode of at most `config.horizon` transitions from env's start
/// distribution. `goal` may be kNoState for pure exploration.
Trajectory rollout(const Environment& env, const ActionSelector& select, StateId goal,
                   const RolloutConfig& config, Rng& rng);
Trajectory rollout(const Environment& env, const Policy& policy, StateId goal,
                   const RolloutConfig& config, Rng& rng);

struct ImproveStats {
  int sweeps = 0;
  double max_change = 0.0;        // largest |dQ| in the final sweep
  bool goal_in_support = true;    // false: every distance to the goal is the d_max default
};

/// Q-value iteration on the replay pool's empirical model with reward
/// r(s) = -d(s, goal). Transitions into the goal bootstrap from 0; absorbing
/// non-goal states are worth r(s') / (1 - gamma).
ImproveStats improve(Policy& policy, const DistanceModel& distance, StateId goal,
                     const Environment& env, const TransitionCounts& replay, int sweeps, double gamma);

/// Same machinery with reward -1 on every non-goal state.
ImproveStats sparse_reward_improve(Policy& policy, StateId goal, const Environment& env,
                                   const TransitionCounts& replay, int sweeps, double gamma);

/// One-step lookahead: argmin over actions of d(s', goal), with the goal
/// itself scoring 0. Needs a single afterstate per action.
ActionId greedy_step_baseline(const DistanceModel& distance, const Environment& env, StateId s,
                              StateId goal);

}  // namespace ddl
