#include "ddl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace ddl {

std::string to_string(PolicyKind kind) { return kind == PolicyKind::TabularQ ? "q" : "softmax"; }

PolicyKind parse_policy_kind(const std::string& text) {
  if (text == "q" || text == "TabularQ") return PolicyKind::TabularQ;
  if (text == "softmax" || text == "TabularSoftmax") return PolicyKind::TabularSoftmax;
  throw ConfigError("unknown policy kind '" + text + "'");
}

Policy::Policy(int state_count, int action_count, PolicyParams params)
    : states_(state_count), actions_(action_count), params_(params) {
  if (state_count < 1 || action_count < 1) throw ContractViolation("policy needs states and actions");
  if (params.epsilon < 0.0 || params.epsilon > 1.0) throw ContractViolation("epsilon must lie in [0, 1]");
  if (params.temperature < 0.0) throw ContractViolation("temperature must be non-negative");
  if (!(params.learning_rate > 0.0)) throw ContractViolation("policy learning rate must be positive");
}

std::size_t Policy::index(StateId s, ActionId a) const {
  if (s < 0 || s >= states_) throw ContractViolation("policy: invalid state " + std::to_string(s));
  return static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a);
}

std::vector<double>& Policy::table(StateId goal) {
  if (goal < 0 || goal >= states_) throw ContractViolation("policy: invalid goal " + std::to_string(goal));
  auto it = tables_.find(goal);
  if (it == tables_.end()) {
    it = tables_.emplace(goal, std::vector<double>(static_cast<std::size_t>(states_ * actions_), params_.q_init)).first;
  }
  return it->second;
}

std::vector<double> Policy::q_values(StateId s, StateId goal) const {
  const std::size_t base = index(s, 0);
  auto it = tables_.find(goal);
  if (it == tables_.end()) return std::vector<double>(static_cast<std::size_t>(actions_), params_.q_init);
  return {it->second.begin() + static_cast<std::ptrdiff_t>(base),
          it->second.begin() + static_cast<std::ptrdiff_t>(base) + actions_};
}

ActionId Policy::greedy_action(StateId s, StateId goal) const {
  const auto q = q_values(s, goal);
  ActionId best = 0;
  for (ActionId a = 1; a < actions_; ++a) {
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  }
  return best;
}

std::vector<double> Policy::action_probabilities(StateId s, StateId goal) const {
  const auto m = static_cast<std::size_t>(actions_);
  std::vector<double> p(m, 1.0 / static_cast<double>(m));
  if (goal == kNoState) {
    index(s, 0);
    return p;
  }
  if (params_.kind == PolicyKind::TabularQ || params_.temperature == 0.0) {
    const double eps = params_.kind == PolicyKind::TabularQ ? params_.epsilon : 0.0;
    std::fill(p.begin(), p.end(), eps / static_cast<double>(m));
    p[static_cast<std::size_t>(greedy_action(s, goal))] += 1.0 - eps;
    return p;
  }
  const auto q = q_values(s, goal);
  const double top = *std::max_element(q.begin(), q.end());
  double total = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    p[a] = std::exp((q[a] - top) / params_.temperature);
    total += p[a];
  }
  for (double& v : p) v /= total;
  return p;
}

ActionId Policy::sample(StateId s, StateId goal, Rng& rng) const {
  const auto p = action_probabilities(s, goal);
  const double u = uniform_real(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    acc += p[a];
    if (u < acc) return static_cast<ActionId>(a);
  }
  return actions_ - 1;
}

void Policy::save(std::ostream& out) const {
  out << std::setprecision(17);
  out << "# ddl-policy v1\n";
  out << "# kind=" << to_string(params_.kind) << " epsilon=" << params_.epsilon
      << " temperature=" << params_.temperature << " learning_rate=" << params_.learning_rate
      << " q_init=" << params_.q_init << " states=" << states_ << " actions=" << actions_ << '\n';
  out << "goal,state,action,q\n";
  for (const auto& [goal, q] : tables_) {
    for (StateId s = 0; s < states_; ++s) {
      for (ActionId a = 0; a < actions_; ++a) {
        out << goal << ',' << s << ',' << a << ',' << q[index(s, a)] << '\n';
      }
    }
  }
}

Policy Policy::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# ddl-policy v1") throw ContractViolation("policy checkpoint: bad header");
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw ContractViolation("policy checkpoint: missing parameters");
  std::istringstream header(line.substr(2));
  PolicyParams params;
  int states = 0, actions = 0;
  for (std::string field; header >> field;) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw ContractViolation("policy checkpoint: bad field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string value = field.substr(eq + 1);
    if (key == "kind") params.kind = parse_policy_kind(value);
    else if (key == "epsilon") params.epsilon = std::stod(value);
    else if (key == "temperature") params.temperature = std::stod(value);
    else if (key == "learning_rate") params.learning_rate = std::stod(value);
    else if (key == "q_init") params.q_init = std::stod(value);
    else if (key == "states") states = std::stoi(value);
    else if (key == "actions") actions = std::stoi(value);
  }
  Policy policy(states, actions, params);
  if (!std::getline(in, line) || line != "goal,state,action,q") throw ContractViolation("policy checkpoint: bad column header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    StateId goal = 0, s = 0;
    ActionId a = 0;
    double q = 0.0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> goal >> c1 >> s >> c2 >> a >> c3 >> q)) throw ContractViolation("policy checkpoint: malformed row");
    policy.table(goal)[policy.index(s, a)] = q;
  }
  return policy;
}

// ---------------------------------------------------------------------------

int RolloutConfig::switch_step() const {
  return static_cast<int>(std::floor(explore_switch_fraction * static_cast<double>(horizon)));
}

Trajectory rollout(const Environment& env, const ActionSelector& select, StateId goal,
                   const RolloutConfig& config, Rng& rng) {
  if (goal != kNoState) env.check_state(goal);
  if (config.explore_switch_fraction < 0.0 || config.explore_switch_fraction > 1.0) {
    throw ContractViolation("explore_switch_fraction must lie in [0, 1]");
  }
  const int horizon = std::min(config.horizon, env.horizon());
  const int switch_at = config.switch_step();
  const StateId terminal_goal = config.stop_at_goal ? goal : kNoState;

  Trajectory t;
  t.goal = goal;
  StateId s = reset(env, rng);
  t.states.push_back(s);
  if (terminal_goal != kNoState && s == terminal_goal) {
    t.terminal = true;
    return t;
  }
  bool explore = false;
  for (int k = 0; k < horizon; ++k) {
    explore = explore || k >= switch_at || (config.explore_after_goal && goal != kNoState && s == goal);
    const ActionId a = explore ? static_cast<ActionId>(uniform_int(rng, 0, env.action_count() - 1))
                               : select(s, rng);
    const Transition tr = step(env, s, a, rng, terminal_goal);
    t.actions.push_back(a);
    t.states.push_back(tr.next_state);
    s = tr.next_state;
    if (tr.terminal) {
      t.terminal = true;
      break;
    }
  }
  return t;
}

Trajectory rollout(const Environment& env, const Policy& policy, StateId goal,
                   const RolloutConfig& config, Rng& rng) {
  if (config.greedy && goal != kNoState) {
    return rollout(env, [&](StateId s, Rng&) { return policy.greedy_action(s, goal); }, goal, config, rng);
  }
  return rollout(env, [&](StateId s, Rng& r) { return policy.sample(s, goal, r); }, goal, config, rng);
}

// ---------------------------------------------------------------------------

namespace {

ImproveStats q_iteration(Policy& policy, StateId goal, const Environment& env,
                         const TransitionCounts& replay, std::span<const double> reward, int sweeps,
                         double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractViolation("gamma must lie in [0, 1)");
  if (sweeps < 0) throw ContractViolation("sweep count must be non-negative");
  if (replay.state_count() != env.state_count() || replay.action_count() != env.action_count()) {
    throw ContractViolation("replay model does not match the environment");
  }
  env.check_state(goal);
  const int n = env.state_count();
  const int m = env.action_count();
  const double rate = policy.params().learning_rate;
  auto& q = policy.table(goal);
  const auto at = [m](StateId s, ActionId a) { return static_cast<std::size_t>(s * m + a); };

  std::vector<bool> absorbing(static_cast<std::size_t>(n));
  for (StateId s = 0; s < n; ++s) absorbing[static_cast<std::size_t>(s)] = env.absorbing(s);
  const auto value = [&](StateId s) {
    if (s == goal) return 0.0;
    if (absorbing[static_cast<std::size_t>(s)]) return reward[static_cast<std::size_t>(s)] / (1.0 - gamma);
    double best = q[at(s, 0)];
    for (ActionId a = 1; a < m; ++a) best = std::max(best, q[at(s, a)]);
    return best;
  };

  ImproveStats stats;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double change = 0.0;
    for (StateId s = 0; s < n; ++s) {
      if (absorbing[static_cast<std::size_t>(s)] && s != goal) continue;
      for (ActionId a = 0; a < m; ++a) {
        const int total = replay.total(s, a);
        if (total == 0) continue;
        double expected = 0.0;
        for (const auto& e : replay.next_states(s, a)) expected += e.count * value(e.next);
        expected /= total;
        const double target = reward[static_cast<std::size_t>(s)] + gamma * expected;
        double& cell = q[at(s, a)];
        const double delta = rate * (target - cell);
        cell += delta;
        change = std::max(change, std::abs(delta));
      }
    }
    stats.max_change = change;
    ++stats.sweeps;
  }
  return stats;
}

}  // namespace

ImproveStats improve(Policy& policy, const DistanceModel& distance, StateId goal,
                     const Environment& env, const TransitionCounts& replay, int sweeps, double gamma) {
  env.check_state(goal);
  const int n = env.state_count();
  std::vector<double> reward(static_cast<std::size_t>(n));
  bool supported = false;
  for (StateId s = 0; s < n; ++s) {
    reward[static_cast<std::size_t>(s)] = -distance.predict(s, goal);
    if (s != goal && distance.observed(s, goal)) supported = true;
  }
  ImproveStats stats = q_iteration(policy, goal, env, replay, reward, sweeps, gamma);
  stats.goal_in_support = supported;
  return stats;
}

ImproveStats sparse_reward_improve(Policy& policy, StateId goal, const Environment& env,
                                   const TransitionCounts& replay, int sweeps, double gamma) {
  env.check_state(goal);
  std::vector<double> reward(static_cast<std::size_t>(env.state_count()), -1.0);
  reward[static_cast<std::size_t>(goal)] = 0.0;
  return q_iteration(policy, goal, env, replay, reward, sweeps, gamma);
}

ActionId greedy_step_baseline(const DistanceModel& distance, const Environment& env, StateId s,
                              StateId goal) {
  env.check_state(s);
  env.check_state(goal);
  ActionId best = 0;
  double best_distance = 0.0;
  for (ActionId a = 0; a < env.action_count(); ++a) {
    const auto out = env.outcomes(s, a);
    if (out.size() != 1) {
      throw Unsupported("greedy_step_baseline: action " + std::to_string(a) + " in state " +
                        std::to_string(s) + " has no unique afterstate");
    }
    const StateId next = out.front().next;
    const double d = next == goal ? 0.0 : distance.predict(next, goal);
    if (a == 0 || d < best_distance) {
      best = a;
      best_distance = d;
    }
  }
  return best;
}

}  // namespace ddl
