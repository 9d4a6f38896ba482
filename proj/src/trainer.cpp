#include "ddl/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ddl {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + value + "'");
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + value + "'");
}

bool parse_bool(const std::string& key, const std::string& value) {
  const auto v = lower(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

int narrow(const std::string& key, std::int64_t v) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(key + ": value out of range");
  }
  return static_cast<int>(v);
}

Method parse_method(const std::string& text) {
  const auto v = lower(text);
  if (v == "ddlus") return Method::DDLUS;
  if (v == "ddlfp") return Method::DDLfP;
  if (v == "fixedgoal" || v == "fixed") return Method::FixedGoal;
  throw ConfigError("method: expected DDLUS, DDLfP or FixedGoal, got '" + text + "'");
}

Baseline parse_baseline(const std::string& text) {
  const auto v = lower(text);
  if (v == "none") return Baseline::None;
  if (v == "greedy") return Baseline::Greedy;
  if (v == "td") return Baseline::TD;
  if (v == "sparse") return Baseline::Sparse;
  throw ConfigError("baseline: expected None, Greedy, TD or Sparse, got '" + text + "'");
}

DistanceKind parse_distance_kind(const std::string& text) {
  const auto v = lower(text);
  if (v == "tabular") return DistanceKind::Tabular;
  if (v == "parametric") return DistanceKind::Parametric;
  throw ConfigError("distance_kind: expected tabular or parametric, got '" + text + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) parts.push_back(part);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::DDLUS: return "DDLUS";
    case Method::DDLfP: return "DDLfP";
    case Method::FixedGoal: return "FixedGoal";
  }
  return "?";
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::None: return "None";
    case Baseline::Greedy: return "Greedy";
    case Baseline::TD: return "TD";
    case Baseline::Sparse: return "Sparse";
  }
  return "?";
}

std::string to_string(DistanceKind k) { return k == DistanceKind::Tabular ? "tabular" : "parametric"; }

std::string Ratio::str() const { return std::to_string(num) + "/" + std::to_string(den); }

Ratio Ratio::parse(const std::string& raw) {
  const std::string text = trim(raw);
  const std::string key = "distance_steps_per_env_step";
  Ratio r;
  if (const auto slash = text.find('/'); slash != std::string::npos) {
    r.num = parse_int(key, trim(text.substr(0, slash)));
    r.den = parse_int(key, trim(text.substr(slash + 1)));
  } else if (const auto dot = text.find('.'); dot != std::string::npos) {
    const std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    const auto places = text.size() - dot - 1;
    if (places > 12) throw ConfigError(key + ": too many decimal places in '" + text + "'");
    r.num = parse_int(key, digits.empty() ? "0" : digits);
    r.den = 1;
    for (std::size_t k = 0; k < places; ++k) r.den *= 10;
  } else {
    r.num = parse_int(key, text);
    r.den = 1;
  }
  if (r.num <= 0 || r.den <= 0) throw ConfigError(key + " must be a positive ratio, got '" + text + "'");
  const auto g = std::gcd(r.num, r.den);
  r.num /= g;
  r.den /= g;
  return r;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& TrainerConfig::keys() {
  static const std::vector<std::string> names{
      "gamma", "horizon_T", "N_d", "N_pi", "lambda_d", "lambda_pi", "distance_steps_per_env_step",
      "on_policy_pool_capacity", "replay_pool_capacity", "slate_size", "query_interval_env_steps",
      "query_budget", "method", "baseline", "seed", "env", "total_env_steps", "distance_kind", "policy_kind",
      "epsilon", "temperature", "q_init", "d_max", "explore_switch_fraction", "stop_at_goal",
      "explore_after_goal", "start", "goal",
      "hidden_goal", "provider", "hidden_units", "checkpoint_every", "td_gamma", "td_learning_rate",
      "tabular_count_cap", "query_timeout_ms", "eval_episodes", "eval_sweeps"};
  return names;
}

void TrainerConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "gamma") gamma = parse_double(key, v);
  else if (key == "horizon_T") horizon_T = narrow(key, parse_int(key, v));
  else if (key == "N_d") N_d = narrow(key, parse_int(key, v));
  else if (key == "N_pi") N_pi = narrow(key, parse_int(key, v));
  else if (key == "lambda_d") lambda_d = parse_double(key, v);
  else if (key == "lambda_pi") lambda_pi = parse_double(key, v);
  else if (key == "distance_steps_per_env_step") distance_steps_per_env_step = Ratio::parse(v);
  else if (key == "on_policy_pool_capacity") on_policy_pool_capacity = parse_int(key, v);
  else if (key == "replay_pool_capacity") replay_pool_capacity = parse_int(key, v);
  else if (key == "slate_size") slate_size = narrow(key, parse_int(key, v));
  else if (key == "query_interval_env_steps") query_interval_env_steps = parse_int(key, v);
  else if (key == "query_budget") query_budget = narrow(key, parse_int(key, v));
  else if (key == "method") method = parse_method(v);
  else if (key == "baseline") baseline = parse_baseline(v);
  else if (key == "seed") {
    const auto s = parse_int(key, v);
    if (s < 0) throw ConfigError("seed must be non-negative");
    seed = static_cast<std::uint64_t>(s);
  } else if (key == "env") env = v;
  else if (key == "total_env_steps") total_env_steps = parse_int(key, v);
  else if (key == "distance_kind") distance_kind = parse_distance_kind(v);
  else if (key == "policy_kind") {
    try {
      policy_kind = parse_policy_kind(v);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("policy_kind: ") + e.what());
    }
  } else if (key == "epsilon") epsilon = parse_double(key, v);
  else if (key == "temperature") temperature = parse_double(key, v);
  else if (key == "q_init") q_init = parse_double(key, v);
  else if (key == "d_max") d_max = parse_double(key, v);
  else if (key == "explore_switch_fraction") explore_switch_fraction = parse_double(key, v);
  else if (key == "stop_at_goal") stop_at_goal = parse_bool(key, v);
  else if (key == "explore_after_goal") explore_after_goal = parse_bool(key, v);
  else if (key == "start") start = lower(v);
  else if (key == "goal") goal = v;
  else if (key == "hidden_goal") hidden_goal = v;
  else if (key == "provider") provider = v;
  else if (key == "hidden_units") hidden_units = narrow(key, parse_int(key, v));
  else if (key == "checkpoint_every") checkpoint_every = narrow(key, parse_int(key, v));
  else if (key == "td_gamma") td_gamma = parse_double(key, v);
  else if (key == "td_learning_rate") td_learning_rate = parse_double(key, v);
  else if (key == "tabular_count_cap") tabular_count_cap = parse_int(key, v);
  else if (key == "query_timeout_ms") query_timeout_ms = parse_int(key, v);
  else if (key == "eval_episodes") eval_episodes = narrow(key, parse_int(key, v));
  else if (key == "eval_sweeps") eval_sweeps = narrow(key, parse_int(key, v));
  else throw ConfigError("unknown config key '" + key + "'");
}

void TrainerConfig::validate() const {
  const auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
  };
  require(gamma >= 0.0 && gamma < 1.0, "gamma must satisfy 0 <= gamma < 1 (got " + format_double(gamma) + ")");
  require(horizon_T >= 1, "horizon_T must be at least 1");
  require(N_d >= 1, "N_d must be positive");
  require(N_pi >= 1, "N_pi must be positive");
  require(lambda_d > 0.0, "lambda_d must be positive");
  require(lambda_pi > 0.0 && lambda_pi <= 1.0, "lambda_pi must lie in (0, 1]");
  require(on_policy_pool_capacity >= horizon_T, "on_policy_pool_capacity must be at least horizon_T");
  require(replay_pool_capacity >= horizon_T, "replay_pool_capacity must be at least horizon_T");
  require(slate_size >= 1 && slate_size <= kMaxSlateSize, "slate_size must lie in [1, 16]");
  require(query_interval_env_steps >= 1, "query_interval_env_steps must be positive");
  require(query_budget >= 0, "query_budget must be non-negative");
  require(total_env_steps >= 1, "total_env_steps must be positive");
  require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
  require(temperature > 0.0, "temperature must be positive");
  require(d_max >= 0.0, "d_max must be non-negative");
  require(explore_switch_fraction >= 0.0 && explore_switch_fraction <= 1.0,
          "explore_switch_fraction must lie in [0, 1]");
  require(start == "fixed" || start == "uniform", "start must be fixed or uniform");
  require(hidden_units >= 1, "hidden_units must be positive");
  require(checkpoint_every >= 0, "checkpoint_every must be non-negative");
  require(td_gamma >= 0.0 && td_gamma <= 1.0, "td_gamma must lie in [0, 1]");
  require(td_learning_rate > 0.0 && td_learning_rate <= 1.0, "td_learning_rate must lie in (0, 1]");
  require(tabular_count_cap >= 0, "tabular_count_cap must be non-negative");
  require(query_timeout_ms >= 0, "query_timeout_ms must be non-negative");
  require(eval_episodes >= 1, "eval_episodes must be positive");
  require(eval_sweeps >= 0, "eval_sweeps must be non-negative");
  require(baseline != Baseline::TD || distance_kind == DistanceKind::Tabular,
          "baseline TD requires distance_kind=tabular");
  require(!env.empty(), "env must name an environment");
  require(!(explore_after_goal && stop_at_goal), "explore_after_goal requires stop_at_goal=false");
}

TrainerConfig TrainerConfig::parse(const std::string& text, TrainerConfig base) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected key=value, got '" + line + "'");
    }
    base.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

TrainerConfig TrainerConfig::parse(const std::string& text) { return parse(text, TrainerConfig{}); }

TrainerConfig TrainerConfig::load(const std::filesystem::path& path) { return load(path, TrainerConfig{}); }

TrainerConfig TrainerConfig::load(const std::filesystem::path& path, TrainerConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse(buffer.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string TrainerConfig::dump() const {
  std::ostringstream out;
  out << "gamma=" << format_double(gamma) << '\n'
      << "horizon_T=" << horizon_T << '\n'
      << "N_d=" << N_d << '\n'
      << "N_pi=" << N_pi << '\n'
      << "lambda_d=" << format_double(lambda_d) << '\n'
      << "lambda_pi=" << format_double(lambda_pi) << '\n'
      << "distance_steps_per_env_step=" << distance_steps_per_env_step.str() << '\n'
      << "on_policy_pool_capacity=" << on_policy_pool_capacity << '\n'
      << "replay_pool_capacity=" << replay_pool_capacity << '\n'
      << "slate_size=" << slate_size << '\n'
      << "query_interval_env_steps=" << query_interval_env_steps << '\n'
      << "query_budget=" << query_budget << '\n'
      << "method=" << to_string(method) << '\n'
      << "baseline=" << to_string(baseline) << '\n'
      << "seed=" << seed << '\n'
      << "env=" << env << '\n'
      << "total_env_steps=" << total_env_steps << '\n'
      << "distance_kind=" << to_string(distance_kind) << '\n'
      << "policy_kind=" << to_string(policy_kind) << '\n'
      << "epsilon=" << format_double(epsilon) << '\n'
      << "temperature=" << format_double(temperature) << '\n'
      << "q_init=" << format_double(q_init) << '\n'
      << "d_max=" << format_double(d_max) << '\n'
      << "explore_switch_fraction=" << format_double(explore_switch_fraction) << '\n'
      << "stop_at_goal=" << (stop_at_goal ? "true" : "false") << '\n'
      << "explore_after_goal=" << (explore_after_goal ? "true" : "false") << '\n'
      << "start=" << start << '\n'
      << "goal=" << goal << '\n'
      << "hidden_goal=" << hidden_goal << '\n'
      << "provider=" << provider << '\n'
      << "hidden_units=" << hidden_units << '\n'
      << "checkpoint_every=" << checkpoint_every << '\n'
      << "td_gamma=" << format_double(td_gamma) << '\n'
      << "td_learning_rate=" << format_double(td_learning_rate) << '\n'
      << "tabular_count_cap=" << tabular_count_cap << '\n'
      << "query_timeout_ms=" << query_timeout_ms << '\n'
      << "eval_episodes=" << eval_episodes << '\n'
      << "eval_sweeps=" << eval_sweeps << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

std::unique_ptr<Environment> make_environment(const TrainerConfig& config, const std::filesystem::path& base_dir) {
  const auto mode = config.start == "uniform" ? StartMode::Uniform : StartMode::Fixed;
  const auto parts = split(config.env, ':');
  const std::string kind = lower(parts.front());
  try {
    if (kind == "corridor") {
      if (parts.size() != 2) throw ConfigError("env: expected corridor:<length>");
      const int length = narrow("env", parse_int("env", parts[1]));
      return std::make_unique<GridMaze>(GridMaze::corridor(length, config.horizon_T).with(config.horizon_T, mode));
    }
    if (kind == "pathological") {
      if (parts.size() != 2) throw ConfigError("env: expected pathological:<p>");
      return std::make_unique<PathologicalMdp>(parse_double("env", parts[1]), config.horizon_T);
    }
    if (kind == "random") {
      if (parts.size() != 4) throw ConfigError("env: expected random:<seed>:<states>:<actions>");
      return std::make_unique<RandomDeterministicMdp>(static_cast<std::uint64_t>(parse_int("env", parts[1])),
                                                      narrow("env", parse_int("env", parts[2])),
                                                      narrow("env", parse_int("env", parts[3])), config.horizon_T);
    }
    std::filesystem::path path(config.env);
    if (path.is_relative() && !base_dir.empty() && std::filesystem::exists(base_dir / path)) path = base_dir / path;
    if (!std::filesystem::exists(path)) throw ConfigError("env: maze file not found: " + config.env);
    return std::make_unique<GridMaze>(GridMaze::load(path, config.horizon_T, mode));
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("env: ") + e.what());
  }
}

StateId resolve_goal(const Environment& env, const std::string& raw) {
  const std::string text = trim(raw);
  const auto* maze = dynamic_cast<const GridMaze*>(&env);
  if (text.empty()) {
    if (maze) {
      if (const auto hint = maze->goal_hint()) return maze->state_at(*hint);
      return env.state_count() - 1;
    }
    if (const auto* mdp = dynamic_cast<const PathologicalMdp*>(&env)) {
      (void)mdp;
      return PathologicalMdp::kGoal;
    }
    if (const auto* mdp = dynamic_cast<const RandomDeterministicMdp*>(&env)) return mdp->goal();
    throw ConfigError("goal: environment '" + env.name() + "' has no default goal");
  }
  if (const auto comma = text.find(','); comma != std::string::npos) {
    if (!maze) throw ConfigError("goal: cell coordinates need a grid environment");
    const Cell c{narrow("goal", parse_int("goal", trim(text.substr(0, comma)))),
                 narrow("goal", parse_int("goal", trim(text.substr(comma + 1))))};
    if (!maze->in_bounds(c) || maze->is_wall(c)) throw ConfigError("goal: cell " + text + " is not a free cell");
    return maze->state_at(c);
  }
  const auto s = parse_int("goal", text);
  if (s < 0 || s >= env.state_count()) throw ConfigError("goal: state " + text + " out of range");
  return static_cast<StateId>(s);
}

std::unique_ptr<PreferenceProvider> make_provider(const TrainerConfig& config, const Environment& env) {
  const auto parts = split(config.provider, ':');
  const std::string kind = lower(parts.front());
  if (kind == "bfs") return std::make_unique<BfsPreferenceOracle>(env, resolve_goal(env, config.hidden_goal));
  if (kind == "xaxis") {
    const auto* maze = dynamic_cast<const GridMaze*>(&env);
    if (!maze) throw ConfigError("provider xaxis needs a grid environment");
    return std::make_unique<AxisPreferenceOracle>(*maze);
  }
  if (kind == "constant" && parts.size() == 2) {
    return std::make_unique<ConstantPreference>(narrow("provider", parse_int("provider", parts[1])));
  }
  if (kind == "keep") return std::make_unique<ConstantPreference>(-1);
  if (kind == "silent") return std::make_unique<SilentPreference>();
  if (kind == "http") throw ConfigError("provider http is only available under the serve command");
  throw ConfigError("provider: expected bfs, xaxis, constant:<k>, keep or silent, got '" + config.provider + "'");
}

// ---------------------------------------------------------------------------

std::string EpisodeRecord::to_json() const {
  nlohmann::ordered_json j;
  j["episode"] = episode;
  j["env_steps"] = env_steps;
  j["final_distance_to_goal"] = final_distance_to_goal ? nlohmann::ordered_json(*final_distance_to_goal) : nullptr;
  j["distance_loss"] = distance_loss ? nlohmann::ordered_json(*distance_loss) : nullptr;
  j["queries_used"] = queries_used;
  j["goal"] = goal == kNoState ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(goal);
  return j.dump();
}

EvalResult evaluate(const Environment& env, const ActionSelector& select, StateId goal, int episodes, Rng& rng) {
  env.check_state(goal);
  if (episodes < 1) throw ContractViolation("evaluate: episodes must be positive");
  RolloutConfig cfg;
  cfg.horizon = env.horizon();
  cfg.explore_switch_fraction = 1.0;
  cfg.stop_at_goal = true;
  cfg.greedy = true;
  EvalResult result;
  result.episodes = episodes;
  int successes = 0;
  double steps = 0.0;
  for (int k = 0; k < episodes; ++k) {
    const Trajectory t = rollout(env, select, goal, cfg, rng);
    if (t.final_state() == goal) {
      ++successes;
      steps += t.length();
    }
  }
  result.success_rate = static_cast<double>(successes) / episodes;
  result.mean_steps = successes > 0 ? steps / successes : 0.0;
  return result;
}

void export_heatmap(const DistanceModel& distance, const GridMaze& maze, StateId goal, std::ostream& out) {
  maze.check_state(goal);
  out << std::setprecision(10);
  for (int y = 0; y < maze.height(); ++y) {
    for (int x = 0; x < maze.width(); ++x) {
      if (x > 0) out << ',';
      const Cell c{x, y};
      if (maze.is_wall(c)) out << -1;
      else out << distance.predict(maze.state_at(c), goal);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

std::unique_ptr<DistanceModel> make_distance(const Environment& env, const TrainerConfig& c) {
  if (c.distance_kind == DistanceKind::Parametric) {
    return std::make_unique<ParametricDistance>(env, c.effective_d_max(), c.lambda_d,
                                                std::vector<int>{c.hidden_units, c.hidden_units}, c.seed);
  }
  return std::make_unique<TabularDistance>(env.state_count(), c.effective_d_max(), c.tabular_count_cap);
}

PolicyParams policy_params(const TrainerConfig& c) {
  PolicyParams p;
  p.kind = c.policy_kind;
  p.epsilon = c.epsilon;
  p.temperature = c.temperature;
  p.learning_rate = c.lambda_pi;
  p.q_init = c.q_init;
  return p;
}

StateId designated_start(const Environment& env) {
  if (const auto* maze = dynamic_cast<const GridMaze*>(&env)) return maze->start_state();
  return env.spec().initial.front().next;
}

constexpr std::size_t kCurveLength = 100;
constexpr int kMaxTruthStates = 4096;

}  // namespace

Trainer::Trainer(const Environment& env, TrainerConfig config, PreferenceProvider* provider)
    : env_(env), config_((config.validate(), std::move(config))), provider_(provider),
      distance_(make_distance(env, config_)),
      policy_(env.state_count(), env.action_count(), policy_params(config_)),
      on_policy_(static_cast<std::size_t>(config_.on_policy_pool_capacity)),
      replay_(static_cast<std::size_t>(config_.replay_pool_capacity), env.state_count(), env.action_count()),
      start_(designated_start(env)),
      rollout_rng_(make_rng(config_.seed, 1)),
      distance_rng_(make_rng(config_.seed, 2)),
      eval_rng_(make_rng(config_.seed, 3)),
      visits_(static_cast<std::size_t>(env.state_count()), 0) {
  if (config_.method == Method::DDLfP && provider_ == nullptr) {
    throw ContractViolation("DDLfP needs a preference provider");
  }
  if (config_.method == Method::FixedGoal) goal_ = fixed_goal(env_, resolve_goal(env_, config_.goal));
  next_query_step_ = config_.query_interval_env_steps;
  if (env_.finite() && env_.state_count() <= kMaxTruthStates) truth_ = oracle::support_bfs_distance(env_);
}

std::optional<double> Trainer::true_distance(StateId from, StateId to) const {
  if (!truth_ || to == kNoState) return std::nullopt;
  const double d = (*truth_)(from, to);
  if (!oracle::reached(d)) return std::nullopt;
  return d;
}

std::optional<DistanceError> Trainer::distance_error(StateId goal) const {
  env_.check_state(goal);
  if (!truth_) return std::nullopt;
  DistanceError e;
  for (StateId s = 0; s < env_.state_count(); ++s) {
    const auto d = true_distance(s, goal);
    if (!d || !distance_->observed(s, goal)) continue;
    const double diff = distance_->predict(s, goal) - *d;
    e.mse += diff * diff;
    ++e.states;
  }
  if (e.states > 0) e.mse /= e.states;
  return e;
}

StatusSnapshot Trainer::status() const {
  StatusSnapshot s;
  s.env_steps = env_steps_;
  s.episode = episodes_;
  s.current_goal = goal_.state;
  s.queries_used = queries_used_;
  for (auto it = records_.rbegin(); it != records_.rend() && s.curve.size() < kCurveLength; ++it) {
    if (it->final_distance_to_goal) s.curve.push_back(*it->final_distance_to_goal);
  }
  std::reverse(s.curve.begin(), s.curve.end());
  return s;
}

void Trainer::choose_goal_before_episode() {
  if (on_policy_.empty()) return;
  if (config_.method == Method::DDLUS) {
    const auto candidates = states_by_recency(on_policy_);
    goal_ = ddlus_choose(*distance_, candidates, start_, env_steps_);
  } else if (config_.method == Method::DDLfP) {
    if (queries_used_ >= config_.query_budget || env_steps_ < next_query_step_) return;
    const auto candidates = recent_final_states(on_policy_, config_.slate_size);
    auto outcome = ddlfp_choose(candidates, *provider_, goal_, queries_used_ + 1, env_steps_,
                                std::chrono::milliseconds(config_.query_timeout_ms));
    ++queries_used_;
    next_query_step_ += config_.query_interval_env_steps;
    outcome.goal.flagged = outcome.goal.state != kNoState && !replay_.contains_state(outcome.goal.state);
    goal_ = outcome.goal;
    if (on_query_) on_query_(outcome);
    query_log_.push_back(std::move(outcome));
  }
}

int Trainer::episode_horizon() const {
  std::int64_t h = config_.horizon_T;
  h = std::min(h, config_.total_env_steps - env_steps_);
  // Queries are issued exactly on their cadence: episodes are cut at the
  // next query step.
  if (config_.method == Method::DDLfP && queries_used_ < config_.query_budget) {
    h = std::min(h, next_query_step_ - env_steps_);
  }
  return static_cast<int>(std::max<std::int64_t>(h, 1));
}

ActionId Trainer::act(StateId s, Rng& rng) const {
  const StateId g = goal_.state;
  if (g == kNoState) return static_cast<ActionId>(uniform_int(rng, 0, env_.action_count() - 1));
  if (config_.baseline == Baseline::Greedy) {
    if (uniform_real(rng) < config_.epsilon) return static_cast<ActionId>(uniform_int(rng, 0, env_.action_count() - 1));
    return greedy_step_baseline(*distance_, env_, s, g);
  }
  return policy_.sample(s, g, rng);
}

ActionId Trainer::greedy_action(StateId s, StateId goal) const {
  if (config_.baseline == Baseline::Greedy) return greedy_step_baseline(*distance_, env_, s, goal);
  return policy_.greedy_action(s, goal);
}

double Trainer::fit_distance(const Trajectory& t) {
  distance_credit_ += config_.distance_steps_per_env_step.num * static_cast<std::int64_t>(TrajectoryPool::cost(t));
  const auto steps = distance_credit_ / config_.distance_steps_per_env_step.den;
  distance_credit_ %= config_.distance_steps_per_env_step.den;
  if (steps == 0) return std::numeric_limits<double>::quiet_NaN();
  distance_steps_ += steps;
  if (config_.baseline == Baseline::TD) {
    if (goal_.state == kNoState) return std::numeric_limits<double>::quiet_NaN();
    auto& table = static_cast<TabularDistance&>(*distance_);
    return td_fit(table, on_policy_, goal_.state, static_cast<int>(steps), config_.N_d, config_.td_learning_rate,
                  config_.td_gamma, distance_rng_)
        .mean_loss();
  }
  return fit(*distance_, on_policy_, static_cast<int>(steps), config_.N_d, distance_rng_).mean_loss();
}

void Trainer::improve_policy() {
  const StateId g = goal_.state;
  if (g == kNoState || config_.baseline == Baseline::Greedy) return;
  if (config_.baseline == Baseline::Sparse) {
    sparse_reward_improve(policy_, g, env_, replay_.counts(), config_.N_pi, config_.gamma);
  } else {
    improve(policy_, *distance_, g, env_, replay_.counts(), config_.N_pi, config_.gamma);
  }
}

void Trainer::plan_toward(StateId goal, int sweeps) {
  env_.check_state(goal);
  if (config_.baseline == Baseline::Greedy || sweeps == 0) return;
  if (config_.baseline == Baseline::Sparse) {
    sparse_reward_improve(policy_, goal, env_, replay_.counts(), sweeps, config_.gamma);
  } else {
    improve(policy_, *distance_, goal, env_, replay_.counts(), sweeps, config_.gamma);
  }
}

bool Trainer::step() {
  if (stop_ || env_steps_ >= config_.total_env_steps) return false;
  choose_goal_before_episode();

  RolloutConfig rc;
  rc.horizon = episode_horizon();
  rc.explore_switch_fraction = config_.explore_switch_fraction;
  rc.stop_at_goal = config_.stop_at_goal;
  rc.explore_after_goal = config_.explore_after_goal;
  Trajectory t = rollout(env_, [this](StateId s, Rng& rng) { return act(s, rng); }, goal_.state, rc, rollout_rng_);
  t.env_step_stamp = env_steps_;
  // A zero-length episode (start on the goal) still spends one step of budget.
  env_steps_ += static_cast<std::int64_t>(TrajectoryPool::cost(t));
  ++episodes_;
  for (StateId s : t.states) ++visits_[static_cast<std::size_t>(s)];
  on_policy_.add(t);
  replay_.add(t);

  const double loss = fit_distance(t);
  improve_policy();

  EpisodeRecord record;
  record.episode = episodes_;
  record.env_steps = env_steps_;
  record.final_distance_to_goal = true_distance(t.final_state(), goal_.state);
  if (!std::isnan(loss)) record.distance_loss = loss;
  record.queries_used = queries_used_;
  record.goal = goal_.state;
  records_.push_back(record);
  if (on_episode_) on_episode_(record, status());
  return true;
}

void Trainer::run(std::ostream* metrics, const std::filesystem::path& checkpoint_dir) {
  try {
    while (step()) {
      if (metrics) *metrics << records_.back().to_json() << '\n';
      if (config_.checkpoint_every > 0 && !checkpoint_dir.empty() && episodes_ % config_.checkpoint_every == 0) {
        write_checkpoint(checkpoint_dir / ("episode_" + std::to_string(episodes_)));
      }
    }
  } catch (...) {
    if (metrics) metrics->flush();
    throw;
  }
  if (metrics) metrics->flush();
}

EvalResult Trainer::evaluate(StateId goal, int episodes) {
  env_.check_state(goal);
  plan_toward(goal, config_.eval_sweeps);
  return ddl::evaluate(env_, [&](StateId s, Rng&) { return greedy_action(s, goal); }, goal, episodes, eval_rng_);
}

void Trainer::write_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto write = [&](const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write checkpoint file " + (dir / name).string());
    body(out);
    out.flush();
    if (!out) throw std::runtime_error("failed writing checkpoint file " + (dir / name).string());
  };
  const std::string distance_name = config_.distance_kind == DistanceKind::Tabular ? "distance.csv" : "distance.txt";
  write(distance_name, [&](std::ostream& out) { distance_->save(out); });
  write("policy.csv", [&](std::ostream& out) { policy_.save(out); });
  write("config.cfg", [&](std::ostream& out) { out << config_.dump(); });
}

}  // namespace ddl
