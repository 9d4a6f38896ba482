#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ddl/common.hpp"
#include "ddl/distance.hpp"
#include "ddl/env.hpp"
#include "ddl/goals.hpp"
#include "ddl/oracle.hpp"
#include "ddl/policy.hpp"
#include "ddl/trajectory.hpp"

namespace ddl {

enum class Method { DDLUS, DDLfP, FixedGoal };
enum class Baseline { None, Greedy, TD, Sparse };
enum class DistanceKind { Tabular, Parametric };

std::string to_string(Method m);
std::string to_string(Baseline b);
std::string to_string(DistanceKind k);

/// Non-negative rational, kept exact so that step accounting never drifts.
struct Ratio {
  std::int64_t num = 1;
  std::int64_t den = 16;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;
  /// Accepts "a/b", integers and plain decimals.
  static Ratio parse(const std::string& text);
};

struct TrainerConfig {
  double gamma = 0.99;
  int horizon_T = 100;
  int N_d = 64;     // pairs per distance regression step
  int N_pi = 20;    // value-iteration sweeps per iteration
  double lambda_d = 3e-4;
  double lambda_pi = 1.0;
  Ratio distance_steps_per_env_step{1, 16};
  std::int64_t on_policy_pool_capacity = 100000;
  std::int64_t replay_pool_capacity = 1000000;
  int slate_size = 5;
  std::int64_t query_interval_env_steps = 10000;
  int query_budget = 10;
  Method method = Method::FixedGoal;
  Baseline baseline = Baseline::None;
  std::uint64_t seed = 0;

  std::string env = "mazes/smaze9.txt";
  std::int64_t total_env_steps = 200000;
  DistanceKind distance_kind = DistanceKind::Tabular;
  PolicyKind policy_kind = PolicyKind::TabularQ;
  double epsilon = 0.1;
  double temperature = 1.0;
  double q_init = 0.0;
  double d_max = 0.0;  // 0: horizon_T
  double explore_switch_fraction = 0.9;
  bool stop_at_goal = true;
  bool explore_after_goal = false;
  std::string start = "fixed";
  std::string goal;         // "x,y", a state id, or empty for the env's default
  std::string hidden_goal;  // target of the scripted preference oracle
  std::string provider = "bfs";
  int hidden_units = 64;
  int checkpoint_every = 0;  // episodes; 0 disables periodic checkpoints
  double td_gamma = 1.0;
  double td_learning_rate = 0.1;
  std::int64_t tabular_count_cap = 0;
  std::int64_t query_timeout_ms = 60000;
  int eval_episodes = 50;
  int eval_sweeps = 500;

  double effective_d_max() const { return d_max > 0.0 ? d_max : horizon_T; }

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
  /// Applies one `key=value` pair; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Flat key=value text. '#' starts a comment.
  static TrainerConfig parse(const std::string& text);
  static TrainerConfig parse(const std::string& text, TrainerConfig base);
  static TrainerConfig load(const std::filesystem::path& path);
  static TrainerConfig load(const std::filesystem::path& path, TrainerConfig base);
  std::string dump() const;
  static const std::vector<std::string>& keys();
};

/// Builds the environment named by `config.env`: a maze file (relative
/// paths are tried against `base_dir` first, then the working directory), `corridor:<length>`,
/// `pathological:<p>` or `random:<seed>:<states>:<actions>`.
std::unique_ptr<Environment> make_environment(const TrainerConfig& config,
                                              const std::filesystem::path& base_dir = {});

/// Resolves a goal string against `env`; empty means the env's default
/// (maze goal hint, corridor end, pathological goal, random-MDP goal).
StateId resolve_goal(const Environment& env, const std::string& text);

/// Provider named by `config.provider` for non-interactive runs: `bfs`,
/// `xaxis`, `constant:<k>`, `keep` or `silent`.
std::unique_ptr<PreferenceProvider> make_provider(const TrainerConfig& config, const Environment& env);

struct EpisodeRecord {
  std::int64_t episode = 0;
  std::int64_t env_steps = 0;
  std::optional<double> final_distance_to_goal;
  std::optional<double> distance_loss;
  int queries_used = 0;
  StateId goal = kNoState;

  std::string to_json() const;
};

struct StatusSnapshot {
  std::int64_t env_steps = 0;
  std::int64_t episode = 0;
  StateId current_goal = kNoState;
  int queries_used = 0;
  std::vector<double> curve;  // recent final distances, oldest first
};

struct EvalResult {
  int episodes = 0;
  double success_rate = 0.0;
  double mean_steps = 0.0;  // over successful episodes
};

struct DistanceError {
  int states = 0;  // observed pairs (s, goal) with a finite true distance
  double mse = 0.0;
};

/// Greedy rollouts (no exploration tail) from the env's start distribution.
EvalResult evaluate(const Environment& env, const ActionSelector& select, StateId goal, int episodes,
                    Rng& rng);

/// CSV matrix [y][x] of d(cell, goal), walls as -1.
void export_heatmap(const DistanceModel& distance, const GridMaze& maze, StateId goal, std::ostream& out);

/// Training loop: rollout, pool update, distance regression, goal choice and
/// policy improvement, one trajectory per iteration.
class Trainer {
 public:
  Trainer(const Environment& env, TrainerConfig config, PreferenceProvider* provider = nullptr);

  /// One iteration. Returns false once the env-step budget is spent.
  bool step();
  /// Runs to the budget (or until request_stop), writing one JSON line per
  /// episode to `metrics` when given, and a checkpoint under
  /// `checkpoint_dir`/episode_<k> every `checkpoint_every` episodes. Metrics
  /// are flushed before a checkpoint failure propagates.
  void run(std::ostream* metrics = nullptr, const std::filesystem::path& checkpoint_dir = {});
  void request_stop() { stop_ = true; }

  void on_episode(std::function<void(const EpisodeRecord&, const StatusSnapshot&)> callback) {
    on_episode_ = std::move(callback);
  }
  void on_query(std::function<void(const PreferenceOutcome&)> callback) { on_query_ = std::move(callback); }

  /// Greedy evaluation toward `goal`, after `eval_sweeps` more sweeps of
  /// value iteration on the frozen distance model and replay pool.
  EvalResult evaluate(StateId goal, int episodes);
  ActionId greedy_action(StateId s, StateId goal) const;
  /// Extra value-iteration sweeps toward `goal` with the current model.
  void plan_toward(StateId goal, int sweeps);

  void write_checkpoint(const std::filesystem::path& dir) const;
  /// Mean squared error of d(s, goal) against the shortest-path table over
  /// pairs the model has observed. Empty when the environment is too large for the table.
  std::optional<DistanceError> distance_error(StateId goal) const;

  const Environment& env() const { return env_; }
  const TrainerConfig& config() const { return config_; }
  const DistanceModel& distance() const { return *distance_; }
  const Policy& policy() const { return policy_; }
  const GoalState& goal() const { return goal_; }
  StateId start_state() const { return start_; }
  int queries_used() const { return queries_used_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t episodes() const { return episodes_; }
  std::int64_t distance_steps() const { return distance_steps_; }
  const TrajectoryPool& on_policy_pool() const { return on_policy_; }
  const ReplayPool& replay() const { return replay_; }
  const std::vector<std::int64_t>& visit_counts() const { return visits_; }
  const std::vector<EpisodeRecord>& records() const { return records_; }
  /// Query log: env step at which each query was issued.
  const std::vector<PreferenceOutcome>& queries() const { return query_log_; }
  StatusSnapshot status() const;

 private:
  void choose_goal_before_episode();
  int episode_horizon() const;
  ActionId act(StateId s, Rng& rng) const;
  double fit_distance(const Trajectory& t);
  void improve_policy();
  std::optional<double> true_distance(StateId from, StateId to) const;

  const Environment& env_;
  TrainerConfig config_;
  PreferenceProvider* provider_;
  std::unique_ptr<DistanceModel> distance_;
  Policy policy_;
  TrajectoryPool on_policy_;
  ReplayPool replay_;
  GoalState goal_;
  StateId start_ = kNoState;
  Rng rollout_rng_;
  Rng distance_rng_;
  Rng eval_rng_;
  std::int64_t env_steps_ = 0;
  std::int64_t episodes_ = 0;
  std::int64_t distance_steps_ = 0;
  std::int64_t distance_credit_ = 0;  // numerator units of the step ratio
  int queries_used_ = 0;
  std::int64_t next_query_step_ = 0;
  std::vector<std::int64_t> visits_;
  std::vector<EpisodeRecord> records_;
  std::vector<PreferenceOutcome> query_log_;
  std::optional<oracle::ExactDistanceTable> truth_;
  std::atomic<bool> stop_{false};
  std::function<void(const EpisodeRecord&, const StatusSnapshot&)> on_episode_;
  std::function<void(const PreferenceOutcome&)> on_query_;
};

}  // namespace ddl
