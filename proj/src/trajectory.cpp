#include "ddl/trajectory.hpp"

#include <algorithm>

namespace ddl {

TrajectoryPool::TrajectoryPool(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ContractViolation("pool capacity must be positive");
}

std::vector<Trajectory> TrajectoryPool::add(Trajectory trajectory) {
  if (trajectory.states.size() != trajectory.actions.size() + 1) {
    throw ContractViolation("trajectory must hold one more state than actions");
  }
  const std::size_t incoming = cost(trajectory);
  if (incoming > capacity_) throw ContractViolation("trajectory longer than pool capacity");
  std::vector<Trajectory> evicted;
  while (transitions_ + incoming > capacity_) {
    transitions_ -= cost(trajectories_.front());
    evicted.push_back(std::move(trajectories_.front()));
    trajectories_.pop_front();
  }
  transitions_ += incoming;
  trajectories_.push_back(std::move(trajectory));
  return evicted;
}

TransitionCounts::TransitionCounts(int state_count, int action_count)
    : states_(state_count), actions_(action_count),
      entries_(static_cast<std::size_t>(state_count * action_count)),
      totals_(static_cast<std::size_t>(state_count * action_count), 0) {}

void TransitionCounts::adjust(StateId s, ActionId a, StateId next, int delta) {
  auto& row = entries_[index(s, a)];
  auto it = std::find_if(row.begin(), row.end(), [&](const Entry& e) { return e.next == next; });
  if (it == row.end()) {
    if (delta < 0) throw ContractViolation("removing a transition that was never counted");
    // Kept sorted by next state so iteration order never depends on arrival order.
    auto pos = std::lower_bound(row.begin(), row.end(), next,
                                [](const Entry& e, StateId n) { return e.next < n; });
    row.insert(pos, Entry{next, delta});
  } else {
    it->count += delta;
    if (it->count == 0) row.erase(it);
  }
  totals_[index(s, a)] += delta;
}

void TransitionCounts::add(const Trajectory& t) {
  for (std::size_t i = 0; i < t.actions.size(); ++i) adjust(t.states[i], t.actions[i], t.states[i + 1], 1);
}

void TransitionCounts::remove(const Trajectory& t) {
  for (std::size_t i = 0; i < t.actions.size(); ++i) adjust(t.states[i], t.actions[i], t.states[i + 1], -1);
}

ReplayPool::ReplayPool(std::size_t capacity, int state_count, int action_count)
    : pool_(capacity), counts_(state_count, action_count),
      state_visits_(static_cast<std::size_t>(state_count), 0) {}

void ReplayPool::add(const Trajectory& t) {
  for (const Trajectory& old : pool_.add(t)) {
    counts_.remove(old);
    for (StateId s : old.states) --state_visits_[static_cast<std::size_t>(s)];
  }
  counts_.add(t);
  for (StateId s : t.states) ++state_visits_[static_cast<std::size_t>(s)];
}

bool ReplayPool::contains_state(StateId s) const {
  return s >= 0 && s < static_cast<StateId>(state_visits_.size()) && state_visits_[static_cast<std::size_t>(s)] > 0;
}

}  // namespace ddl
