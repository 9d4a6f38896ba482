#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddl/common.hpp"
#include "ddl/distance.hpp"
#include "ddl/env.hpp"
#include "ddl/trajectory.hpp"

namespace ddl {

enum class GoalSource { DDLUS, DDLfP, Fixed };

std::string to_string(GoalSource source);

struct GoalState {
  StateId state = kNoState;
  GoalSource source = GoalSource::Fixed;
  std::int64_t chosen_at_env_step = 0;
  bool flagged = false;  // goal was not in the replay pool when chosen
};

inline constexpr int kMaxSlateSize = 16;

struct PreferenceQuery {
  std::int64_t query_id = 0;
  std::vector<StateId> candidates;  // final states of the most recent episodes, oldest first
  StateId previous_goal = kNoState;
  std::int64_t issued_at_env_step = 0;

  /// Index that means "keep the previous goal".
  int keep_index() const { return static_cast<int>(candidates.size()); }
};

struct PreferenceResponse {
  std::int64_t query_id = 0;
  int choice_index = 0;
};

/// Anything that can answer a slate: a person behind the HTTP endpoint or a
/// scripted rule. Returning nullopt means no answer arrived within `timeout`.
class PreferenceProvider {
 public:
  virtual ~PreferenceProvider() = default;
  virtual std::optional<PreferenceResponse> answer(const PreferenceQuery& query,
                                                   std::chrono::milliseconds timeout) = 0;
  virtual std::string name() const = 0;
};

/// Picks the candidate with the smallest shortest-path distance to a hidden
/// target; lowest index on ties. Answers "keep previous" when the previous
/// goal is strictly closer than every candidate.
class BfsPreferenceOracle final : public PreferenceProvider {
 public:
  BfsPreferenceOracle(const Environment& env, StateId hidden_target);
  std::optional<PreferenceResponse> answer(const PreferenceQuery& query, std::chrono::milliseconds) override;
  std::string name() const override { return "bfs"; }
  StateId target() const { return target_; }

 private:
  StateId target_;
  std::vector<double> to_target_;
};

/// Picks the candidate furthest along the x axis; lowest index on ties.
/// Keeps the previous goal when it is strictly further.
class AxisPreferenceOracle final : public PreferenceProvider {
 public:
  explicit AxisPreferenceOracle(const GridMaze& maze) : maze_(maze) {}
  std::optional<PreferenceResponse> answer(const PreferenceQuery& query, std::chrono::milliseconds) override;
  std::string name() const override { return "xaxis"; }

 private:
  const GridMaze& maze_;
};

/// Always answers `index`; a negative index means "keep previous".
class ConstantPreference final : public PreferenceProvider {
 public:
  explicit ConstantPreference(int index) : index_(index) {}
  std::optional<PreferenceResponse> answer(const PreferenceQuery& query, std::chrono::milliseconds) override;
  std::string name() const override { return index_ < 0 ? "keep" : "constant:" + std::to_string(index_); }

 private:
  int index_;
};

/// Never answers.
class SilentPreference final : public PreferenceProvider {
 public:
  std::optional<PreferenceResponse> answer(const PreferenceQuery&, std::chrono::milliseconds) override {
    return std::nullopt;
  }
  std::string name() const override { return "silent"; }
};

class CallbackPreference final : public PreferenceProvider {
 public:
  using Callback = std::function<std::optional<PreferenceResponse>(const PreferenceQuery&)>;
  explicit CallbackPreference(Callback callback) : callback_(std::move(callback)) {}
  std::optional<PreferenceResponse> answer(const PreferenceQuery& query, std::chrono::milliseconds) override {
    return callback_(query);
  }
  std::string name() const override { return "callback"; }

 private:
  Callback callback_;
};

/// Distinct states of `pool`, ordered by their most recent appearance
/// (oldest first).
std::vector<StateId> states_by_recency(const TrajectoryPool& pool);

/// Final states of the last `n` episodes in episode order; fewer if the
/// pool holds fewer episodes.
std::vector<StateId> recent_final_states(const TrajectoryPool& pool, int n);

/// argmax over `candidates` of d(s0, c). Candidates are ordered oldest
/// first and ties go to the most recent one.
GoalState ddlus_choose(const DistanceModel& distance, std::span<const StateId> candidates, StateId s0,
                       std::int64_t env_step = 0);

struct PreferenceOutcome {
  GoalState goal;
  PreferenceQuery query;
  std::optional<int> choice;  // accepted choice_index
  int attempts = 0;           // provider calls made
  bool timed_out = false;
  int malformed = 0;          // rejected responses
};

/// Issues one query. A timeout keeps the previous goal; a malformed
/// response is rejected and the query re-asked once before falling back to
/// the previous goal.
PreferenceOutcome ddlfp_choose(std::span<const StateId> candidates, PreferenceProvider& provider,
                               const GoalState& previous, std::int64_t query_id, std::int64_t env_step,
                               std::chrono::milliseconds timeout);

/// Validates `state` and flags it when `replay` has never visited it.
GoalState fixed_goal(const Environment& env, StateId state, const ReplayPool* replay = nullptr,
                     std::int64_t env_step = 0);

}  // namespace ddl
