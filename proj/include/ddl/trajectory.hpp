#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "ddl/common.hpp"
#include "ddl/env.hpp"

namespace ddl {

struct Trajectory {
  std::vector<StateId> states;    // s_0 .. s_L
  std::vector<ActionId> actions;  // a_0 .. a_{L-1}
  bool terminal = false;
  StateId goal = kNoState;
  std::int64_t env_step_stamp = 0;  // environment steps taken before this episode

  int length() const { return static_cast<int>(actions.size()); }
  StateId initial_state() const { return states.front(); }
  StateId final_state() const { return states.back(); }
};

/// FIFO buffer of whole trajectories bounded by a transition budget.
class TrajectoryPool {
 public:
  explicit TrajectoryPool(std::size_t capacity);

  /// Appends `trajectory` and returns the trajectories evicted to make room,
  /// oldest first.
  std::vector<Trajectory> add(Trajectory trajectory);

  std::size_t capacity() const { return capacity_; }
  std::size_t transition_count() const { return transitions_; }
  std::size_t size() const { return trajectories_.size(); }
  bool empty() const { return trajectories_.empty(); }
  const std::deque<Trajectory>& trajectories() const { return trajectories_; }

  // A zero-length episode still occupies one slot so the buffer stays bounded.
  static std::size_t cost(const Trajectory& t) { return t.actions.empty() ? 1 : t.actions.size(); }

 private:
  std::size_t capacity_;
  std::size_t transitions_ = 0;
  std::deque<Trajectory> trajectories_;
};

/// Empirical transition model: visit counts of (s, a) -> s'.
class TransitionCounts {
 public:
  struct Entry {
    StateId next;
    int count;
  };

  TransitionCounts(int state_count, int action_count);

  void add(const Trajectory& t);
  void remove(const Trajectory& t);

  int total(StateId s, ActionId a) const { return totals_[index(s, a)]; }
  std::span<const Entry> next_states(StateId s, ActionId a) const { return entries_[index(s, a)]; }
  int state_count() const { return states_; }
  int action_count() const { return actions_; }

 private:
  std::size_t index(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a);
  }
  void adjust(StateId s, ActionId a, StateId next, int delta);

  int states_;
  int actions_;
  std::vector<std::vector<Entry>> entries_;
  std::vector<int> totals_;
};

/// Off-policy replay pool: trajectories plus the empirical model they induce.
class ReplayPool {
 public:
  ReplayPool(std::size_t capacity, int state_count, int action_count);

  void add(const Trajectory& t);

  const TrajectoryPool& trajectories() const { return pool_; }
  const TransitionCounts& counts() const { return counts_; }
  bool contains_state(StateId s) const;

 private:
  TrajectoryPool pool_;
  TransitionCounts counts_;
  std::vector<int> state_visits_;
};

}  // namespace ddl
