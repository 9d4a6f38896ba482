#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ddl/common.hpp"

namespace ddl {

struct Outcome {
  StateId next = kNoState;
  double probability = 1.0;
};

struct Transition {
  StateId state = kNoState;
  ActionId action = 0;
  StateId next_state = kNoState;
  bool terminal = false;
};

struct EnvSpec {
  int state_count = 0;
  int action_count = 0;
  int horizon = 1;                  // T, maximum episode length
  std::vector<Outcome> initial;     // rho(s0)
  bool goal_terminal = true;

  void validate() const;
};

/// Markov decision process over integer states and actions.
///
/// Instances are immutable after construction. Episode position is owned by
/// the caller (the current state plus a step counter), so one environment
/// can serve any number of concurrent rollouts.
class Environment {
 public:
  explicit Environment(EnvSpec spec);
  virtual ~Environment() = default;

  const EnvSpec& spec() const { return spec_; }
  int state_count() const { return spec_.state_count; }
  int action_count() const { return spec_.action_count; }
  int horizon() const { return spec_.horizon; }

  virtual std::string name() const = 0;

  /// False for environments whose states cannot be enumerated.
  virtual bool finite() const { return true; }
  virtual bool deterministic() const = 0;

  /// Full next-state distribution p(.|s,a).
  virtual std::vector<Outcome> outcomes(StateId s, ActionId a) const = 0;

  /// Absorbing states end the episode. The goal is not absorbing unless the
  /// environment says so; goal termination is handled by step().
  virtual bool absorbing(StateId s) const;

  /// Input encoding for parametric models. Defaults to one-hot.
  virtual std::vector<double> features(StateId s) const;

  bool valid_state(StateId s) const { return s >= 0 && s < spec_.state_count; }
  void check_state(StateId s) const;
  void check_action(ActionId a) const;

 private:
  EnvSpec spec_;
};

StateId reset(const Environment& env, Rng& rng);

/// Samples s' ~ p(.|s,a). `terminal` is set when s' is absorbing or, for
/// goal-terminal environments, when s' equals `goal`.
Transition step(const Environment& env, StateId s, ActionId a, Rng& rng, StateId goal = kNoState);

std::vector<StateId> enumerate_states(const Environment& env);

// ---------------------------------------------------------------------------

class TabularMdp : public Environment {
 public:
  /// `table[s * action_count + a]` lists the outcomes of (s, a).
  TabularMdp(EnvSpec spec, std::vector<std::vector<Outcome>> table, std::vector<bool> absorbing,
             std::string name = "tabular");

  std::string name() const override { return name_; }
  bool deterministic() const override { return deterministic_; }
  std::vector<Outcome> outcomes(StateId s, ActionId a) const override;
  bool absorbing(StateId s) const override;

 private:
  std::vector<std::vector<Outcome>> table_;
  std::vector<bool> absorbing_;
  std::string name_;
  bool deterministic_ = true;
};

/// Two routes from s0 to g: a risky one through a single intermediate state
/// that reaches g with probability p and the absorbing failure state
/// otherwise, and a safe one through two intermediate states.
class PathologicalMdp : public TabularMdp {
 public:
  enum StateIndex : StateId { kStart = 0, kRisky = 1, kSafe1 = 2, kSafe2 = 3, kGoal = 4, kFailure = 5 };
  enum ActionIndex : ActionId { kTakeRisky = 0, kTakeSafe = 1 };

  explicit PathologicalMdp(double p, int horizon = 20);

  double success_probability() const { return p_; }

 private:
  double p_;
};

/// Random deterministic MDP with a designated absorbing goal (the last
/// state) that is reachable from every state. Start state is 0.
class RandomDeterministicMdp : public TabularMdp {
 public:
  static constexpr int kMaxStates = 64;
  static constexpr int kMaxActions = 4;

  /// `horizon` of 0 means 2 * state_count.
  RandomDeterministicMdp(std::uint64_t seed, int state_count, int action_count, int horizon = 0);

  StateId goal() const { return state_count() - 1; }
  std::uint64_t seed() const { return seed_; }
  StateId next(StateId s, ActionId a) const { return outcomes(s, a).front().next; }

 private:
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class StartMode { Fixed, Uniform };

/// Deterministic grid world. Only free cells are states; walls and the
/// border leave the agent in place.
class GridMaze : public Environment {
 public:
  enum Move : ActionId { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
  static constexpr int kActionCount = 5;

  /// `rows` uses '#' for walls, '.' for free cells, 'S' for the start and an
  /// optional 'G' goal hint. All rows must have equal width.
  static GridMaze parse(std::string_view text, int horizon, StartMode start_mode = StartMode::Fixed);
  static GridMaze load(const std::filesystem::path& path, int horizon,
                       StartMode start_mode = StartMode::Fixed);
  /// Open 1 x length corridor starting at the left end.
  static GridMaze corridor(int length, int horizon);

  std::string name() const override { return "grid"; }
  bool deterministic() const override { return true; }
  std::vector<Outcome> outcomes(StateId s, ActionId a) const override;
  std::vector<double> features(StateId s) const override;

  int width() const { return width_; }
  int height() const { return height_; }
  bool is_wall(Cell c) const;
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  Cell cell_of(StateId s) const;
  StateId state_at(Cell c) const;
  Cell start_cell() const { return start_; }
  StateId start_state() const { return state_at(start_); }
  std::optional<Cell> goal_hint() const { return goal_hint_; }
  StartMode start_mode() const { return start_mode_; }

  /// Same layout, different start distribution or horizon.
  GridMaze with(int horizon, StartMode start_mode) const;

 private:
  GridMaze(EnvSpec spec, int width, int height, std::vector<bool> walls, Cell start,
           std::optional<Cell> goal_hint, StartMode start_mode, std::vector<StateId> index,
           std::vector<Cell> cells);

  int width_;
  int height_;
  std::vector<bool> walls_;
  Cell start_;
  std::optional<Cell> goal_hint_;
  StartMode start_mode_;
  std::vector<StateId> index_;  // y * width + x -> state or kNoState
  std::vector<Cell> cells_;     // state -> cell
};

// ---------------------------------------------------------------------------

enum class CellKind { Wall, Free, Start, Goal, Agent };

struct CellView {
  CellKind kind = CellKind::Free;
  std::optional<double> value;
};

/// Row-major: matrix[y][x].
using CellMatrix = std::vector<std::vector<CellView>>;

struct GridOverlay {
  StateId agent = kNoState;
  StateId goal = kNoState;
  std::vector<double> values;  // one per state, or empty
};

CellMatrix render_grid(const Environment& env, const GridOverlay& overlay = {});

char cell_code(CellKind kind);

}  // namespace ddl
