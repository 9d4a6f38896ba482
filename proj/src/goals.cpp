#include "ddl/goals.hpp"

#include <algorithm>
#include <limits>

#include "ddl/oracle.hpp"

namespace ddl {

std::string to_string(GoalSource source) {
  switch (source) {
    case GoalSource::DDLUS: return "DDLUS";
    case GoalSource::DDLfP: return "DDLfP";
    case GoalSource::Fixed: return "Fixed";
  }
  return "?";
}

BfsPreferenceOracle::BfsPreferenceOracle(const Environment& env, StateId hidden_target) : target_(hidden_target) {
  env.check_state(hidden_target);
  to_target_ = oracle::support_bfs_distance(env).to_state(hidden_target);
}

std::optional<PreferenceResponse> BfsPreferenceOracle::answer(const PreferenceQuery& query,
                                                              std::chrono::milliseconds) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(query.candidates.size()); ++i) {
    if (to_target_[static_cast<std::size_t>(query.candidates[static_cast<std::size_t>(i)])] <
        to_target_[static_cast<std::size_t>(query.candidates[static_cast<std::size_t>(best)])]) {
      best = i;
    }
  }
  // The previous goal is on the slate too; keep it only when strictly closer.
  if (query.previous_goal != kNoState &&
      to_target_[static_cast<std::size_t>(query.previous_goal)] <
          to_target_[static_cast<std::size_t>(query.candidates[static_cast<std::size_t>(best)])]) {
    best = query.keep_index();
  }
  return PreferenceResponse{query.query_id, best};
}

std::optional<PreferenceResponse> AxisPreferenceOracle::answer(const PreferenceQuery& query,
                                                               std::chrono::milliseconds) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(query.candidates.size()); ++i) {
    if (maze_.cell_of(query.candidates[static_cast<std::size_t>(i)]).x >
        maze_.cell_of(query.candidates[static_cast<std::size_t>(best)]).x) {
      best = i;
    }
  }
  if (query.previous_goal != kNoState &&
      maze_.cell_of(query.previous_goal).x > maze_.cell_of(query.candidates[static_cast<std::size_t>(best)]).x) {
    best = query.keep_index();
  }
  return PreferenceResponse{query.query_id, best};
}

std::optional<PreferenceResponse> ConstantPreference::answer(const PreferenceQuery& query,
                                                             std::chrono::milliseconds) {
  return PreferenceResponse{query.query_id, index_ < 0 ? query.keep_index() : index_};
}

// ---------------------------------------------------------------------------

std::vector<StateId> states_by_recency(const TrajectoryPool& pool) {
  std::vector<std::pair<std::int64_t, StateId>> last_seen;
  std::vector<std::int64_t> position;
  std::int64_t clock = 0;
  for (const auto& t : pool.trajectories()) {
    for (StateId s : t.states) {
      if (static_cast<std::size_t>(s) >= position.size()) position.resize(static_cast<std::size_t>(s) + 1, -1);
      position[static_cast<std::size_t>(s)] = clock++;
    }
  }
  for (std::size_t s = 0; s < position.size(); ++s) {
    if (position[s] >= 0) last_seen.push_back({position[s], static_cast<StateId>(s)});
  }
  std::sort(last_seen.begin(), last_seen.end());
  std::vector<StateId> ordered;
  ordered.reserve(last_seen.size());
  for (const auto& entry : last_seen) ordered.push_back(entry.second);
  return ordered;
}

std::vector<StateId> recent_final_states(const TrajectoryPool& pool, int n) {
  if (n < 0) throw ContractViolation("slate size must be non-negative");
  const auto& trajectories = pool.trajectories();
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(n), trajectories.size());
  std::vector<StateId> finals;
  for (std::size_t k = trajectories.size() - count; k < trajectories.size(); ++k) {
    finals.push_back(trajectories[k].final_state());
  }
  return finals;
}

GoalState ddlus_choose(const DistanceModel& distance, std::span<const StateId> candidates, StateId s0,
                       std::int64_t env_step) {
  if (candidates.empty()) throw ContractViolation("ddlus_choose: candidate pool is empty");
  StateId best = candidates.front();
  double best_distance = -std::numeric_limits<double>::infinity();
  for (StateId c : candidates) {
    const double d = distance.predict(s0, c);
    if (d >= best_distance) {
      best = c;
      best_distance = d;
    }
  }
  return GoalState{best, GoalSource::DDLUS, env_step, false};
}

PreferenceOutcome ddlfp_choose(std::span<const StateId> candidates, PreferenceProvider& provider,
                               const GoalState& previous, std::int64_t query_id, std::int64_t env_step,
                               std::chrono::milliseconds timeout) {
  const int n = static_cast<int>(candidates.size());
  if (n < 1 || n > kMaxSlateSize) throw ContractViolation("slate must hold between 1 and 16 candidates");

  PreferenceOutcome outcome;
  outcome.goal = previous;
  outcome.query.query_id = query_id;
  outcome.query.candidates.assign(candidates.begin(), candidates.end());
  outcome.query.previous_goal = previous.state;
  outcome.query.issued_at_env_step = env_step;

  for (int attempt = 0; attempt < 2; ++attempt) {
    ++outcome.attempts;
    const auto response = provider.answer(outcome.query, timeout);
    if (!response) {
      outcome.timed_out = true;
      return outcome;
    }
    if (response->query_id != query_id || response->choice_index < 0 || response->choice_index > n) {
      ++outcome.malformed;
      continue;
    }
    outcome.choice = response->choice_index;
    if (response->choice_index < n) {
      outcome.goal = GoalState{candidates[static_cast<std::size_t>(response->choice_index)], GoalSource::DDLfP,
                               env_step, false};
    }
    return outcome;
  }
  return outcome;
}

GoalState fixed_goal(const Environment& env, StateId state, const ReplayPool* replay, std::int64_t env_step) {
  if (!env.valid_state(state)) throw ContractViolation("fixed_goal: invalid state " + std::to_string(state));
  return GoalState{state, GoalSource::Fixed, env_step, replay != nullptr && !replay->contains_state(state)};
}

}  // namespace ddl
