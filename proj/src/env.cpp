#include "ddl/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace ddl {

void EnvSpec::validate() const {
  if (horizon < 1) throw ContractViolation("horizon_T must be >= 1");
  if (action_count < 1) throw ContractViolation("action_count must be >= 1");
  if (state_count < 1) throw ContractViolation("state_count must be >= 1");
  if (initial.empty()) throw ContractViolation("initial state distribution is empty");
  double total = 0.0;
  for (const auto& o : initial) {
    if (o.next < 0 || o.next >= state_count) throw ContractViolation("initial state out of range");
    if (o.probability < 0.0) throw ContractViolation("negative initial probability");
    total += o.probability;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractViolation("initial distribution does not sum to 1");
}

Environment::Environment(EnvSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

bool Environment::absorbing(StateId) const { return false; }

std::vector<double> Environment::features(StateId s) const {
  check_state(s);
  std::vector<double> f(static_cast<std::size_t>(state_count()), 0.0);
  f[static_cast<std::size_t>(s)] = 1.0;
  return f;
}

void Environment::check_state(StateId s) const {
  if (!valid_state(s)) throw ContractViolation("invalid state id " + std::to_string(s));
}

void Environment::check_action(ActionId a) const {
  if (a < 0 || a >= spec_.action_count) {
    throw ContractViolation("invalid action id " + std::to_string(a));
  }
}

namespace {

StateId sample_outcome(const std::vector<Outcome>& outcomes, Rng& rng) {
  if (outcomes.size() == 1) return outcomes.front().next;
  const double u = uniform_real(rng);
  double acc = 0.0;
  for (const auto& o : outcomes) {
    acc += o.probability;
    if (u < acc) return o.next;
  }
  return outcomes.back().next;
}

}  // namespace

StateId reset(const Environment& env, Rng& rng) { return sample_outcome(env.spec().initial, rng); }

Transition step(const Environment& env, StateId s, ActionId a, Rng& rng, StateId goal) {
  env.check_state(s);
  env.check_action(a);
  const StateId next = sample_outcome(env.outcomes(s, a), rng);
  const bool at_goal = goal != kNoState && env.spec().goal_terminal && next == goal;
  return Transition{s, a, next, at_goal || env.absorbing(next)};
}

std::vector<StateId> enumerate_states(const Environment& env) {
  if (!env.finite()) throw Unsupported("enumerate_states: environment '" + env.name() + "' is not finite");
  std::vector<StateId> states(static_cast<std::size_t>(env.state_count()));
  for (StateId s = 0; s < env.state_count(); ++s) states[static_cast<std::size_t>(s)] = s;
  return states;
}

// ---------------------------------------------------------------------------

TabularMdp::TabularMdp(EnvSpec spec, std::vector<std::vector<Outcome>> table,
                       std::vector<bool> absorbing, std::string name)
    : Environment(std::move(spec)), table_(std::move(table)), absorbing_(std::move(absorbing)),
      name_(std::move(name)) {
  const auto n = static_cast<std::size_t>(state_count());
  const auto m = static_cast<std::size_t>(action_count());
  if (table_.size() != n * m) throw ContractViolation("transition table must have state_count * action_count rows");
  if (absorbing_.size() != n) throw ContractViolation("absorbing flags must have one entry per state");
  for (const auto& row : table_) {
    if (row.empty()) throw ContractViolation("transition table row without outcomes");
    double total = 0.0;
    for (const auto& o : row) {
      if (!valid_state(o.next)) throw ContractViolation("transition to invalid state");
      total += o.probability;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractViolation("transition probabilities do not sum to 1");
    if (row.size() > 1) deterministic_ = false;
  }
}

std::vector<Outcome> TabularMdp::outcomes(StateId s, ActionId a) const {
  check_state(s);
  check_action(a);
  return table_[static_cast<std::size_t>(s * action_count() + a)];
}

bool TabularMdp::absorbing(StateId s) const {
  check_state(s);
  return absorbing_[static_cast<std::size_t>(s)];
}

namespace {

EnvSpec pathological_spec(int horizon) {
  EnvSpec spec;
  spec.state_count = 6;
  spec.action_count = 2;
  spec.horizon = horizon;
  spec.initial = {{PathologicalMdp::kStart, 1.0}};
  return spec;
}

std::vector<std::vector<Outcome>> pathological_table(double p) {
  using P = PathologicalMdp;
  if (!(p >= 0.0 && p <= 1.0)) throw ContractViolation("success probability must lie in [0, 1]");
  std::vector<std::vector<Outcome>> table(12);
  auto set_both = [&](StateId s, std::vector<Outcome> row) {
    table[static_cast<std::size_t>(2 * s)] = row;
    table[static_cast<std::size_t>(2 * s + 1)] = std::move(row);
  };
  table[2 * P::kStart + P::kTakeRisky] = {{P::kRisky, 1.0}};
  table[2 * P::kStart + P::kTakeSafe] = {{P::kSafe1, 1.0}};
  std::vector<Outcome> risky;
  if (p > 0.0) risky.push_back({P::kGoal, p});
  if (p < 1.0) risky.push_back({P::kFailure, 1.0 - p});
  set_both(P::kRisky, risky);
  set_both(P::kSafe1, {{P::kSafe2, 1.0}});
  set_both(P::kSafe2, {{P::kGoal, 1.0}});
  set_both(P::kGoal, {{P::kGoal, 1.0}});
  set_both(P::kFailure, {{P::kFailure, 1.0}});
  return table;
}

}  // namespace

PathologicalMdp::PathologicalMdp(double p, int horizon)
    : TabularMdp(pathological_spec(horizon), pathological_table(p),
                 {false, false, false, false, true, true}, "pathological"),
      p_(p) {}

namespace {

bool goal_connected(const std::vector<std::vector<Outcome>>& table, int n, int m, StateId goal) {
  std::vector<std::vector<StateId>> reverse(static_cast<std::size_t>(n));
  for (StateId s = 0; s < n; ++s) {
    for (ActionId a = 0; a < m; ++a) {
      reverse[static_cast<std::size_t>(table[static_cast<std::size_t>(s * m + a)].front().next)].push_back(s);
    }
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::deque<StateId> queue{goal};
  seen[static_cast<std::size_t>(goal)] = true;
  int count = 1;
  while (!queue.empty()) {
    const StateId s = queue.front();
    queue.pop_front();
    for (StateId prev : reverse[static_cast<std::size_t>(s)]) {
      if (!seen[static_cast<std::size_t>(prev)]) {
        seen[static_cast<std::size_t>(prev)] = true;
        ++count;
        queue.push_back(prev);
      }
    }
  }
  return count == n;
}

std::vector<std::vector<Outcome>> random_table(std::uint64_t seed, int n, int m) {
  if (n < 2 || n > RandomDeterministicMdp::kMaxStates) {
    throw ContractViolation("random MDP state_count must lie in [2, 64]");
  }
  if (m < 1 || m > RandomDeterministicMdp::kMaxActions) {
    throw ContractViolation("random MDP action_count must lie in [1, 4]");
  }
  Rng rng = make_rng(seed, 0x4d4450);
  const StateId goal = n - 1;
  std::vector<std::vector<Outcome>> table(static_cast<std::size_t>(n * m));
  // One action per state is hopeless to sample connected beyond a handful
  // of states, so give up loudly instead of spinning.
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    for (StateId s = 0; s < n; ++s) {
      for (ActionId a = 0; a < m; ++a) {
        const StateId next = s == goal ? goal : static_cast<StateId>(uniform_int(rng, 0, n - 1));
        table[static_cast<std::size_t>(s * m + a)] = {{next, 1.0}};
      }
    }
    if (goal_connected(table, n, m, goal)) return table;
  }
  throw ContractViolation("random MDP: no goal-connected table found for " + std::to_string(n) + " states and " +
                          std::to_string(m) + " actions");
}

EnvSpec random_spec(int n, int m, int horizon) {
  EnvSpec spec;
  spec.state_count = n;
  spec.action_count = m;
  spec.horizon = horizon > 0 ? horizon : 2 * n;
  spec.initial = {{0, 1.0}};
  return spec;
}

std::vector<bool> goal_absorbing(int n) {
  std::vector<bool> flags(static_cast<std::size_t>(n), false);
  flags.back() = true;
  return flags;
}

}  // namespace

RandomDeterministicMdp::RandomDeterministicMdp(std::uint64_t seed, int state_count, int action_count,
                                               int horizon)
    : TabularMdp(random_spec(state_count, action_count, horizon),
                 random_table(seed, state_count, action_count), goal_absorbing(state_count),
                 "random"),
      seed_(seed) {}

// ---------------------------------------------------------------------------

GridMaze::GridMaze(EnvSpec spec, int width, int height, std::vector<bool> walls, Cell start,
                   std::optional<Cell> goal_hint, StartMode start_mode, std::vector<StateId> index,
                   std::vector<Cell> cells)
    : Environment(std::move(spec)), width_(width), height_(height), walls_(std::move(walls)),
      start_(start), goal_hint_(goal_hint), start_mode_(start_mode), index_(std::move(index)),
      cells_(std::move(cells)) {}

GridMaze GridMaze::parse(std::string_view text, int horizon, StartMode start_mode) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw ContractViolation("maze text has no rows");
  const int width = static_cast<int>(rows.front().size());
  const int height = static_cast<int>(rows.size());

  std::vector<bool> walls(static_cast<std::size_t>(width * height), false);
  std::optional<Cell> start;
  std::optional<Cell> goal;
  for (int y = 0; y < height; ++y) {
    if (static_cast<int>(rows[static_cast<std::size_t>(y)].size()) != width) {
      throw ContractViolation("maze row " + std::to_string(y) + " has a different width");
    }
    for (int x = 0; x < width; ++x) {
      const char c = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
      switch (c) {
        case '#': walls[static_cast<std::size_t>(y * width + x)] = true; break;
        case '.': break;
        case 'S':
          if (start) throw ContractViolation("maze has more than one start cell");
          start = Cell{x, y};
          break;
        case 'G':
          if (goal) throw ContractViolation("maze has more than one goal cell");
          goal = Cell{x, y};
          break;
        default:
          throw ContractViolation(std::string("unexpected maze character '") + c + "'");
      }
    }
  }
  if (!start) throw ContractViolation("maze has no start cell 'S'");

  std::vector<StateId> index(walls.size(), kNoState);
  std::vector<Cell> cells;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (walls[static_cast<std::size_t>(y * width + x)]) continue;
      index[static_cast<std::size_t>(y * width + x)] = static_cast<StateId>(cells.size());
      cells.push_back({x, y});
    }
  }

  EnvSpec spec;
  spec.state_count = static_cast<int>(cells.size());
  spec.action_count = kActionCount;
  spec.horizon = horizon;
  if (start_mode == StartMode::Fixed) {
    spec.initial = {{index[static_cast<std::size_t>(start->y * width + start->x)], 1.0}};
  } else {
    const double p = 1.0 / static_cast<double>(cells.size());
    for (StateId s = 0; s < static_cast<StateId>(cells.size()); ++s) spec.initial.push_back({s, p});
  }
  return GridMaze(std::move(spec), width, height, std::move(walls), *start, goal, start_mode,
                  std::move(index), std::move(cells));
}

GridMaze GridMaze::load(const std::filesystem::path& path, int horizon, StartMode start_mode) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open maze file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), horizon, start_mode);
}

GridMaze GridMaze::corridor(int length, int horizon) {
  if (length < 1) throw ContractViolation("corridor length must be positive");
  std::string row(static_cast<std::size_t>(length), '.');
  row[0] = 'S';
  return parse(row, horizon);
}

GridMaze GridMaze::with(int horizon, StartMode start_mode) const {
  std::string text;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const Cell c{x, y};
      if (is_wall(c)) text += '#';
      else if (c == start_) text += 'S';
      else if (goal_hint_ && c == *goal_hint_) text += 'G';
      else text += '.';
    }
    text += '\n';
  }
  return parse(text, horizon, start_mode);
}

bool GridMaze::is_wall(Cell c) const {
  return !in_bounds(c) || walls_[static_cast<std::size_t>(c.y * width_ + c.x)];
}

Cell GridMaze::cell_of(StateId s) const {
  check_state(s);
  return cells_[static_cast<std::size_t>(s)];
}

StateId GridMaze::state_at(Cell c) const {
  if (is_wall(c)) {
    throw ContractViolation("cell (" + std::to_string(c.x) + "," + std::to_string(c.y) + ") is not free");
  }
  return index_[static_cast<std::size_t>(c.y * width_ + c.x)];
}

std::vector<Outcome> GridMaze::outcomes(StateId s, ActionId a) const {
  check_action(a);
  Cell c = cell_of(s);
  Cell n = c;
  switch (a) {
    case kUp: n.y -= 1; break;
    case kDown: n.y += 1; break;
    case kLeft: n.x -= 1; break;
    case kRight: n.x += 1; break;
    default: break;
  }
  if (is_wall(n)) n = c;
  return {{state_at(n), 1.0}};
}

std::vector<double> GridMaze::features(StateId s) const {
  const Cell c = cell_of(s);
  const double x = width_ > 1 ? static_cast<double>(c.x) / (width_ - 1) : 0.0;
  const double y = height_ > 1 ? static_cast<double>(c.y) / (height_ - 1) : 0.0;
  return {x, y};
}

// ---------------------------------------------------------------------------

CellMatrix render_grid(const Environment& env, const GridOverlay& overlay) {
  const auto* maze = dynamic_cast<const GridMaze*>(&env);
  if (maze == nullptr) throw Unsupported("render_grid: environment '" + env.name() + "' is not a grid");
  if (!overlay.values.empty() && static_cast<int>(overlay.values.size()) != env.state_count()) {
    throw ContractViolation("overlay has " + std::to_string(overlay.values.size()) +
                            " values for " + std::to_string(env.state_count()) + " free cells");
  }
  if (overlay.agent != kNoState) env.check_state(overlay.agent);
  if (overlay.goal != kNoState) env.check_state(overlay.goal);

  CellMatrix matrix(static_cast<std::size_t>(maze->height()),
                    std::vector<CellView>(static_cast<std::size_t>(maze->width())));
  for (int y = 0; y < maze->height(); ++y) {
    for (int x = 0; x < maze->width(); ++x) {
      auto& view = matrix[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
      const Cell c{x, y};
      if (maze->is_wall(c)) {
        view.kind = CellKind::Wall;
        continue;
      }
      const StateId s = maze->state_at(c);
      if (s == overlay.agent) view.kind = CellKind::Agent;
      else if (s == overlay.goal) view.kind = CellKind::Goal;
      else if (c == maze->start_cell()) view.kind = CellKind::Start;
      else view.kind = CellKind::Free;
      if (!overlay.values.empty()) view.value = overlay.values[static_cast<std::size_t>(s)];
    }
  }
  return matrix;
}

char cell_code(CellKind kind) {
  switch (kind) {
    case CellKind::Wall: return '#';
    case CellKind::Free: return '.';
    case CellKind::Start: return 'S';
    case CellKind::Goal: return 'G';
    case CellKind::Agent: return 'A';
  }
  return '?';
}

}  // namespace ddl
