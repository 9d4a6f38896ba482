#include "ddl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include <Eigen/Dense>

namespace ddl::oracle {

ExactDistanceTable::ExactDistanceTable(int state_count)
    : n_(state_count),
      values_(static_cast<std::size_t>(state_count) * static_cast<std::size_t>(state_count), kUnreached),
      errors_(values_.size(), 0.0) {}

std::size_t ExactDistanceTable::index(StateId from, StateId to) const {
  if (from < 0 || from >= n_ || to < 0 || to >= n_) throw ContractViolation("distance table: invalid pair");
  return static_cast<std::size_t>(from) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(to);
}

std::vector<double> ExactDistanceTable::to_state(StateId to) const {
  std::vector<double> column(static_cast<std::size_t>(n_));
  for (StateId s = 0; s < n_; ++s) column[static_cast<std::size_t>(s)] = (*this)(s, to);
  return column;
}

// ---------------------------------------------------------------------------

PolicyTable uniform_policy(const Environment& env) {
  const auto m = static_cast<std::size_t>(env.action_count());
  return PolicyTable(static_cast<std::size_t>(env.state_count()), std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

PolicyTable deterministic_policy(const std::vector<ActionId>& actions, int action_count) {
  PolicyTable table(actions.size(), std::vector<double>(static_cast<std::size_t>(action_count), 0.0));
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= action_count) throw ContractViolation("deterministic_policy: invalid action");
    table[s][static_cast<std::size_t>(actions[s])] = 1.0;
  }
  return table;
}

PolicyTable policy_table(const Policy& policy, StateId goal, bool greedy) {
  PolicyTable table;
  for (StateId s = 0; s < policy.state_count(); ++s) {
    if (greedy) {
      std::vector<double> row(static_cast<std::size_t>(policy.action_count()), 0.0);
      row[static_cast<std::size_t>(policy.greedy_action(s, goal))] = 1.0;
      table.push_back(std::move(row));
    } else {
      table.push_back(policy.action_probabilities(s, goal));
    }
  }
  return table;
}

bool is_deterministic(const PolicyTable& policy) {
  for (const auto& row : policy) {
    if (std::count_if(row.begin(), row.end(), [](double p) { return p > 0.0; }) != 1) return false;
  }
  return true;
}

namespace {

void check_policy(const Environment& env, const PolicyTable& policy) {
  if (static_cast<int>(policy.size()) != env.state_count()) throw ContractViolation("policy table has the wrong number of states");
  for (const auto& row : policy) {
    if (static_cast<int>(row.size()) != env.action_count()) throw ContractViolation("policy table has the wrong number of actions");
  }
}

ActionId sample_action(const std::vector<double>& row, Rng& rng) {
  const double u = uniform_real(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < row.size(); ++a) {
    acc += row[a];
    if (u < acc) return static_cast<ActionId>(a);
  }
  for (std::size_t a = row.size(); a-- > 0;) {
    if (row[a] > 0.0) return static_cast<ActionId>(a);
  }
  return 0;
}

ActionId only_action(const std::vector<double>& row) {
  return static_cast<ActionId>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

// ---------------------------------------------------------------------------

ExactDistanceTable support_bfs_distance(const Environment& env) {
  const int n = env.state_count();
  std::vector<std::vector<StateId>> next(static_cast<std::size_t>(n));
  for (StateId s = 0; s < n; ++s) {
    auto& row = next[static_cast<std::size_t>(s)];
    for (ActionId a = 0; a < env.action_count(); ++a) {
      for (const auto& o : env.outcomes(s, a)) {
        if (o.probability > 0.0) row.push_back(o.next);
      }
    }
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  ExactDistanceTable table(n);
  std::vector<int> dist(static_cast<std::size_t>(n));
  for (StateId source = 0; source < n; ++source) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[static_cast<std::size_t>(source)] = 0;
    std::deque<StateId> queue{source};
    while (!queue.empty()) {
      const StateId s = queue.front();
      queue.pop_front();
      for (StateId t : next[static_cast<std::size_t>(s)]) {
        if (dist[static_cast<std::size_t>(t)] < 0) {
          dist[static_cast<std::size_t>(t)] = dist[static_cast<std::size_t>(s)] + 1;
          queue.push_back(t);
        }
      }
    }
    for (StateId t = 0; t < n; ++t) {
      const int d = dist[static_cast<std::size_t>(t)];
      if (d >= 0) table.set(source, t, d);
    }
  }
  return table;
}

ExactDistanceTable bfs_distance(const Environment& env) {
  if (!env.deterministic()) throw Unsupported("bfs_distance: environment '" + env.name() + "' is stochastic");
  return support_bfs_distance(env);
}

ExactDistanceTable exact_policy_distance(const Environment& env, const PolicyTable& policy,
                                         int horizon, int mc_samples, Rng& rng) {
  check_policy(env, policy);
  if (horizon < 0) throw ContractViolation("horizon must be non-negative");
  const int n = env.state_count();
  const bool exact = env.deterministic() && is_deterministic(policy);
  const int runs = exact ? 1 : mc_samples;
  if (runs < 1) throw ContractViolation("mc_samples must be positive for stochastic env or policy");

  ExactDistanceTable table(n);
  std::vector<double> sum(static_cast<std::size_t>(n));
  std::vector<double> sum_sq(static_cast<std::size_t>(n));
  std::vector<int> hits(static_cast<std::size_t>(n));
  std::vector<int> first(static_cast<std::size_t>(n));
  for (StateId start = 0; start < n; ++start) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(sum_sq.begin(), sum_sq.end(), 0.0);
    std::fill(hits.begin(), hits.end(), 0);
    for (int run = 0; run < runs; ++run) {
      std::fill(first.begin(), first.end(), -1);
      StateId s = start;
      first[static_cast<std::size_t>(s)] = 0;
      for (int t = 1; t <= horizon; ++t) {
        const auto& row = policy[static_cast<std::size_t>(s)];
        const ActionId a = exact ? only_action(row) : sample_action(row, rng);
        s = step(env, s, a, rng).next_state;
        if (first[static_cast<std::size_t>(s)] < 0) first[static_cast<std::size_t>(s)] = t;
      }
      for (StateId t = 0; t < n; ++t) {
        const int k = first[static_cast<std::size_t>(t)];
        if (k < 0) continue;
        sum[static_cast<std::size_t>(t)] += k;
        sum_sq[static_cast<std::size_t>(t)] += static_cast<double>(k) * k;
        ++hits[static_cast<std::size_t>(t)];
      }
    }
    for (StateId t = 0; t < n; ++t) {
      const int h = hits[static_cast<std::size_t>(t)];
      if (h == 0) continue;
      const double mean = sum[static_cast<std::size_t>(t)] / h;
      table.set(start, t, mean);
      if (h > 1) {
        const double var = std::max(0.0, (sum_sq[static_cast<std::size_t>(t)] - h * mean * mean) / (h - 1));
        table.set_standard_error(start, t, std::sqrt(var / h));
      }
    }
  }
  return table;
}

std::vector<double> goal_distance(const Environment& env, const PolicyTable& policy, StateId goal) {
  check_policy(env, policy);
  env.check_state(goal);
  const int n = env.state_count();
  std::vector<double> result(static_cast<std::size_t>(n), kUnreached);
  result[static_cast<std::size_t>(goal)] = 0.0;

  if (env.deterministic() && is_deterministic(policy)) {
    for (StateId start = 0; start < n; ++start) {
      StateId s = start;
      for (int k = 0; k <= n; ++k) {
        if (s == goal) {
          result[static_cast<std::size_t>(start)] = k;
          break;
        }
        s = env.outcomes(s, only_action(policy[static_cast<std::size_t>(s)])).front().next;
      }
    }
    return result;
  }

  // Chain kernel under the policy and the states that can reach the goal.
  std::vector<std::vector<std::pair<StateId, double>>> kernel(static_cast<std::size_t>(n));
  std::vector<std::vector<StateId>> reverse(static_cast<std::size_t>(n));
  for (StateId s = 0; s < n; ++s) {
    if (s == goal) continue;
    for (ActionId a = 0; a < env.action_count(); ++a) {
      const double pa = policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      if (pa <= 0.0) continue;
      for (const auto& o : env.outcomes(s, a)) {
        if (o.probability <= 0.0) continue;
        kernel[static_cast<std::size_t>(s)].push_back({o.next, pa * o.probability});
        reverse[static_cast<std::size_t>(o.next)].push_back(s);
      }
    }
  }
  std::vector<bool> can_reach(static_cast<std::size_t>(n), false);
  can_reach[static_cast<std::size_t>(goal)] = true;
  std::deque<StateId> queue{goal};
  while (!queue.empty()) {
    const StateId s = queue.front();
    queue.pop_front();
    for (StateId prev : reverse[static_cast<std::size_t>(s)]) {
      if (!can_reach[static_cast<std::size_t>(prev)]) {
        can_reach[static_cast<std::size_t>(prev)] = true;
        queue.push_back(prev);
      }
    }
  }
  std::vector<int> slot(static_cast<std::size_t>(n), -1);
  std::vector<StateId> transient;
  for (StateId s = 0; s < n; ++s) {
    if (s != goal && can_reach[static_cast<std::size_t>(s)]) {
      slot[static_cast<std::size_t>(s)] = static_cast<int>(transient.size());
      transient.push_back(s);
    }
  }
  if (transient.empty()) return result;

  const auto k = static_cast<Eigen::Index>(transient.size());
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(k, k);
  Eigen::VectorXd direct = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (const auto& [next, p] : kernel[static_cast<std::size_t>(transient[static_cast<std::size_t>(i)])]) {
      if (next == goal) direct(i) += p;
      else if (slot[static_cast<std::size_t>(next)] >= 0) system(i, slot[static_cast<std::size_t>(next)]) -= p;
    }
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  const Eigen::VectorXd hit = lu.solve(direct);          // P(reach goal)
  const Eigen::VectorXd weighted = lu.solve(hit);        // E[steps * 1{reach}]
  for (Eigen::Index i = 0; i < k; ++i) {
    if (hit(i) > 1e-14) result[static_cast<std::size_t>(transient[static_cast<std::size_t>(i)])] = weighted(i) / hit(i);
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<double> optimal_q(const Environment& env, StateId goal, const std::vector<double>& distance,
                              double d_max, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractViolation("gamma must lie in [0, 1)");
  env.check_state(goal);
  const int n = env.state_count();
  const int m = env.action_count();
  if (static_cast<int>(distance.size()) != n) throw ContractViolation("distance vector has the wrong size");

  std::vector<double> reward(static_cast<std::size_t>(n));
  for (StateId s = 0; s < n; ++s) {
    const double d = distance[static_cast<std::size_t>(s)];
    reward[static_cast<std::size_t>(s)] = -(reached(d) ? std::min(d, d_max) : d_max);
  }
  std::vector<std::vector<std::vector<Outcome>>> model(static_cast<std::size_t>(n));
  std::vector<bool> absorbing(static_cast<std::size_t>(n));
  for (StateId s = 0; s < n; ++s) {
    absorbing[static_cast<std::size_t>(s)] = env.absorbing(s);
    for (ActionId a = 0; a < m; ++a) model[static_cast<std::size_t>(s)].push_back(env.outcomes(s, a));
  }

  std::vector<double> q(static_cast<std::size_t>(n * m), 0.0);
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  const auto value_of = [&](StateId s) {
    if (s == goal) return 0.0;
    if (absorbing[static_cast<std::size_t>(s)]) return reward[static_cast<std::size_t>(s)] / (1.0 - gamma);
    return v[static_cast<std::size_t>(s)];
  };
  double scale = 1.0;
  for (double r : reward) scale = std::max(scale, std::abs(r) / (1.0 - gamma));

  for (int iteration = 0; iteration < 1000000; ++iteration) {
    double change = 0.0;
    for (StateId s = 0; s < n; ++s) {
      if (s == goal || absorbing[static_cast<std::size_t>(s)]) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (ActionId a = 0; a < m; ++a) {
        double expected = 0.0;
        for (const auto& o : model[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]) {
          expected += o.probability * value_of(o.next);
        }
        const double target = reward[static_cast<std::size_t>(s)] + gamma * expected;
        change = std::max(change, std::abs(target - q[static_cast<std::size_t>(s * m + a)]));
        q[static_cast<std::size_t>(s * m + a)] = target;
        best = std::max(best, target);
      }
      v[static_cast<std::size_t>(s)] = best;
    }
    if (change <= 1e-13 * scale) break;
  }
  for (StateId s = 0; s < n; ++s) {
    if (s != goal && !absorbing[static_cast<std::size_t>(s)]) continue;
    for (ActionId a = 0; a < m; ++a) q[static_cast<std::size_t>(s * m + a)] = value_of(s);
  }
  return q;
}

std::vector<ActionId> greedy_actions(const std::vector<double>& q, int state_count, int action_count) {
  std::vector<ActionId> actions(static_cast<std::size_t>(state_count), 0);
  for (StateId s = 0; s < state_count; ++s) {
    const auto row = q.begin() + static_cast<std::ptrdiff_t>(s) * action_count;
    const double top = *std::max_element(row, row + action_count);
    const double tol = 1e-9 * std::max(1.0, std::abs(top));
    for (ActionId a = 0; a < action_count; ++a) {
      if (row[a] >= top - tol) {
        actions[static_cast<std::size_t>(s)] = a;
        break;
      }
    }
  }
  return actions;
}

// ---------------------------------------------------------------------------

namespace {

bool same_distances(const std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (reached(a[i]) != reached(b[i])) return false;
    if (reached(a[i]) && std::abs(a[i] - b[i]) > 1e-9) return false;
  }
  return true;
}

}  // namespace

PolicyIterationResult ddl_exact_policy_iteration(const Environment& env, StateId goal, double gamma,
                                                 int max_rounds, const PolicyTable& initial, double d_max) {
  if (!env.deterministic()) {
    throw Unsupported("ddl_exact_policy_iteration: environment '" + env.name() + "' is stochastic");
  }
  check_policy(env, initial);
  env.check_state(goal);
  if (d_max <= 0.0) d_max = env.horizon();

  PolicyIterationResult result;
  result.optimal = bfs_distance(env).to_state(goal);

  PolicyIterationRound start;
  if (is_deterministic(initial)) {
    for (const auto& row : initial) start.policy.push_back(only_action(row));
  }
  start.distance = goal_distance(env, initial, goal);
  result.rounds.push_back(std::move(start));

  for (int round = 1; round <= max_rounds; ++round) {
    const auto& previous = result.rounds.back().distance;
    const auto q = optimal_q(env, goal, previous, d_max, gamma);
    PolicyIterationRound next;
    next.policy = greedy_actions(q, env.state_count(), env.action_count());
    next.distance = goal_distance(env, deterministic_policy(next.policy, env.action_count()), goal);

    for (StateId s = 0; s < env.state_count(); ++s) {
      const double before = previous[static_cast<std::size_t>(s)];
      const double after = next.distance[static_cast<std::size_t>(s)];
      if (after > before + 1e-9 && result.monotone) {
        result.monotone = false;
        std::ostringstream msg;
        msg << "round " << round << ": d(" << s << ", g) rose from " << before << " to " << after;
        result.violation = msg.str();
      }
    }
    const bool fixpoint = same_distances(previous, next.distance);
    result.rounds.push_back(std::move(next));
    if (fixpoint) {
      result.converged = true;
      result.optimal_at_fixpoint = same_distances(result.rounds.back().distance, result.optimal);
      if (!result.optimal_at_fixpoint && result.violation.empty()) {
        result.violation = "fixpoint distances differ from shortest paths";
      }
      break;
    }
  }
  if (!result.converged && result.violation.empty()) result.violation = "no fixpoint within round budget";
  return result;
}

// ---------------------------------------------------------------------------

double Eq5Result::combined_se() const { return std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se); }

namespace {

struct Episode {
  std::vector<StateId> states;
  std::vector<ActionId> actions;
};

bool stops(const Environment& env, StateId s, StateId goal) { return s == goal || env.absorbing(s); }

// Runs until `length` states have been produced or the goal/absorbing set
// is entered; the first action may be forced.
Episode simulate(const Environment& env, const PolicyTable& policy, StateId goal, StateId start,
                 ActionId first_action, int length, Rng& rng) {
  Episode e;
  StateId s = start;
  for (int t = 0; t < length; ++t) {
    e.states.push_back(s);
    if (stops(env, s, goal)) break;
    const ActionId a = (t == 0 && first_action >= 0) ? first_action : sample_action(policy[static_cast<std::size_t>(s)], rng);
    e.actions.push_back(a);
    s = step(env, s, a, rng).next_state;
  }
  return e;
}

double collapsed(const Environment& env, const Episode& e, StateId goal, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (std::size_t t = 0; t < e.states.size(); ++t) {
    if (!stops(env, e.states[t], goal)) total += discount * static_cast<double>(t + 1);
    discount *= gamma;
  }
  return -total;
}

double nested(const Environment& env, const PolicyTable& policy, const Episode& outer, StateId goal,
              double gamma, int horizon, Rng& rng) {
  double total = 0.0;
  double outer_discount = 1.0;
  for (std::size_t t = 0; t < outer.states.size(); ++t) {
    const StateId s = outer.states[t];
    if (!stops(env, s, goal)) {
      const ActionId a = outer.actions[t];
      const Episode inner = simulate(env, policy, goal, s, a, horizon - static_cast<int>(t), rng);
      double inner_sum = 0.0;
      double inner_discount = 1.0;
      for (StateId x : inner.states) {
        if (!stops(env, x, goal)) inner_sum += inner_discount;
        inner_discount *= gamma;
      }
      total += outer_discount * inner_sum;
    }
    outer_discount *= gamma;
  }
  return -total;
}

}  // namespace

Eq5Result eq5_identity_check(const Environment& env, const PolicyTable& policy, StateId goal,
                             double gamma, int horizon, int mc_samples, Rng& rng) {
  check_policy(env, policy);
  env.check_state(goal);
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractViolation("gamma must lie in [0, 1]");
  if (horizon < 1) throw ContractViolation("horizon must be positive");

  Eq5Result result;
  result.exact = env.deterministic() && is_deterministic(policy) && env.spec().initial.size() == 1;
  const int samples = result.exact ? 1 : mc_samples;
  if (samples < 2 && !result.exact) throw ContractViolation("need at least two Monte Carlo samples");

  std::vector<double> lhs(static_cast<std::size_t>(samples));
  std::vector<double> rhs(static_cast<std::size_t>(samples));
  for (int k = 0; k < samples; ++k) {
    const Episode outer = simulate(env, policy, goal, reset(env, rng), -1, horizon, rng);
    lhs[static_cast<std::size_t>(k)] = nested(env, policy, outer, goal, gamma, horizon, rng);
    const Episode independent = simulate(env, policy, goal, reset(env, rng), -1, horizon, rng);
    rhs[static_cast<std::size_t>(k)] = collapsed(env, independent, goal, gamma);
  }
  const auto summarize = [samples](const std::vector<double>& xs, double& mean, double& se) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= samples;
    se = 0.0;
    if (samples > 1) {
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      se = std::sqrt(var / (samples - 1) / samples);
    }
  };
  summarize(lhs, result.lhs, result.lhs_se);
  summarize(rhs, result.rhs, result.rhs_se);
  result.diff = result.lhs - result.rhs;
  return result;
}

// ---------------------------------------------------------------------------

BranchRow pathological_branch_row(double p, double gamma, double d_max, int horizon) {
  const PathologicalMdp env(p, horizon);
  using P = PathologicalMdp;
  // Conditional distances only depend on the branch taken at s0, and only
  // at s0 itself, so the risky-branch policy's table serves both actions.
  const auto risky = deterministic_policy(std::vector<ActionId>(6, P::kTakeRisky), 2);
  const auto distance = goal_distance(env, risky, P::kGoal);
  const auto capped = [&](StateId s) {
    const double d = distance[static_cast<std::size_t>(s)];
    return reached(d) ? std::min(d, d_max) : d_max;
  };

  BranchRow row;
  row.p = p;
  row.greedy = capped(P::kSafe1) < capped(P::kRisky) ? P::kTakeSafe : P::kTakeRisky;
  const auto q = optimal_q(env, P::kGoal, distance, d_max, gamma);
  row.q_risky = q[static_cast<std::size_t>(2 * P::kStart + P::kTakeRisky)];
  row.q_safe = q[static_cast<std::size_t>(2 * P::kStart + P::kTakeSafe)];
  row.cumulative = greedy_actions(q, 6, 2)[P::kStart];
  return row;
}

BranchAnalysis pathological_branch_analysis(const std::vector<double>& p_grid, double gamma,
                                            double d_max, int horizon) {
  BranchAnalysis analysis;
  for (double p : p_grid) analysis.rows.push_back(pathological_branch_row(p, gamma, d_max, horizon));

  const auto margin = [&](double p) {
    const auto row = pathological_branch_row(p, gamma, d_max, horizon);
    return row.q_risky - row.q_safe;
  };
  if (margin(1.0) <= 0.0) {
    analysis.crossover = 1.0;
  } else if (margin(0.0) > 0.0) {
    analysis.crossover = 0.0;
  } else {
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 200 && hi - lo > 1e-15; ++k) {
      const double mid = 0.5 * (lo + hi);
      (margin(mid) > 0.0 ? hi : lo) = mid;
    }
    analysis.crossover = 0.5 * (lo + hi);
  }
  return analysis;
}

}  // namespace ddl::oracle
