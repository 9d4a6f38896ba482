#include "ddl/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "ddl/distance.hpp"
#include "ddl/env.hpp"
#include "ddl/oracle.hpp"

namespace ddl::verify {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

CaseResult make_case(const std::string& suite, std::string name, bool passed, const json& details) {
  return CaseResult{suite, std::move(name), passed, details.dump()};
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

json distances_json(const std::vector<double>& d) {
  json out = json::array();
  for (double v : d) out.push_back(oracle::reached(v) ? json(v) : json(nullptr));
  return out;
}

// Deterministic policy that follows shortest paths to the goal.
std::vector<ActionId> shortest_path_policy(const RandomDeterministicMdp& env, const std::vector<double>& to_goal) {
  std::vector<ActionId> actions(static_cast<std::size_t>(env.state_count()), 0);
  for (StateId s = 0; s < env.state_count(); ++s) {
    for (ActionId a = 0; a < env.action_count(); ++a) {
      if (to_goal[static_cast<std::size_t>(env.next(s, a))] <
          to_goal[static_cast<std::size_t>(env.next(s, actions[static_cast<std::size_t>(s)]))]) {
        actions[static_cast<std::size_t>(s)] = a;
      }
    }
  }
  return actions;
}

}  // namespace

bool SuiteReport::passed() const { return failures() == 0 && !cases.empty(); }

int SuiteReport::failures() const {
  return static_cast<int>(std::count_if(cases.begin(), cases.end(), [](const CaseResult& c) { return !c.passed; }));
}

std::vector<std::string> SuiteReport::json_lines() const {
  std::vector<std::string> lines;
  for (const auto& c : cases) {
    json j;
    j["suite"] = c.suite;
    j["case"] = c.name;
    j["passed"] = c.passed;
    j["details"] = json::parse(c.details);
    lines.push_back(j.dump());
  }
  json summary;
  summary["suite"] = suite;
  summary["summary"] = true;
  summary["passed"] = passed();
  summary["cases"] = cases.size();
  summary["failures"] = failures();
  summary["seconds"] = std::round(seconds * 1000.0) / 1000.0;
  lines.push_back(summary.dump());
  return lines;
}

// ---------------------------------------------------------------------------

SuiteReport appendix_b(const SuiteOptions& options) {
  const auto start = Clock::now();
  SuiteReport report{"appendixB", {}, 0.0};
  const double gammas[] = {0.99, 0.9, 0.5};
  for (int k = 0; k < options.seeds; ++k) {
    const std::uint64_t seed = options.seed + static_cast<std::uint64_t>(k);
    Rng shape = make_rng(seed, 0xB);
    const int n = static_cast<int>(uniform_int(shape, 4, RandomDeterministicMdp::kMaxStates));
    const int m = static_cast<int>(uniform_int(shape, 2, RandomDeterministicMdp::kMaxActions));
    const double gamma = gammas[k % 3];
    const RandomDeterministicMdp env(seed, n, m);
    const auto result =
        oracle::ddl_exact_policy_iteration(env, env.goal(), gamma, 4 * n + 10, oracle::uniform_policy(env));
    json details;
    details["seed"] = seed;
    details["states"] = n;
    details["actions"] = m;
    details["gamma"] = gamma;
    details["rounds"] = result.rounds.size() - 1;
    details["monotone"] = result.monotone;
    details["converged"] = result.converged;
    details["optimal_at_fixpoint"] = result.optimal_at_fixpoint;
    if (!result.violation.empty()) details["violation"] = result.violation;
    const bool ok = result.monotone && result.converged && result.optimal_at_fixpoint;
    if (!ok) details["final_distance"] = distances_json(result.rounds.back().distance);
    report.cases.push_back(make_case("appendixB", "uniform_start_seed_" + std::to_string(seed), ok, details));

    // A random deterministic start, which may loop forever away from the goal.
    std::vector<ActionId> arbitrary;
    for (StateId s = 0; s < n; ++s) arbitrary.push_back(static_cast<ActionId>(uniform_int(shape, 0, m - 1)));
    const auto walk = oracle::ddl_exact_policy_iteration(env, env.goal(), gamma, 4 * n + 10,
                                                         oracle::deterministic_policy(arbitrary, m));
    json d3;
    d3["seed"] = seed;
    d3["rounds"] = walk.rounds.size() - 1;
    d3["monotone"] = walk.monotone;
    d3["converged"] = walk.converged;
    d3["optimal_at_fixpoint"] = walk.optimal_at_fixpoint;
    if (!walk.violation.empty()) d3["violation"] = walk.violation;
    report.cases.push_back(make_case("appendixB", "random_start_seed_" + std::to_string(seed),
                                     walk.monotone && walk.converged && walk.optimal_at_fixpoint, d3));

    // Starting from the optimal policy must be a fixpoint after one round.
    if (k < 10) {
      const auto optimal = shortest_path_policy(env, result.optimal);
      const auto again = oracle::ddl_exact_policy_iteration(env, env.goal(), gamma, 4 * n + 10,
                                                            oracle::deterministic_policy(optimal, m));
      json d2;
      d2["seed"] = seed;
      d2["rounds"] = again.rounds.size() - 1;
      const bool ok2 = again.converged && again.rounds.size() == 2 && again.optimal_at_fixpoint && again.monotone;
      report.cases.push_back(make_case("appendixB", "optimal_start_seed_" + std::to_string(seed), ok2, d2));
    }
  }
  report.seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------------------

SuiteReport eq5(const SuiteOptions& options) {
  const auto start = Clock::now();
  SuiteReport report{"eq5", {}, 0.0};
  Rng rng = make_rng(options.seed, 0xE5);
  const int samples = options.mc_samples;

  const auto record = [&](const std::string& name, const Environment& env, const oracle::PolicyTable& policy,
                          StateId goal, double gamma, int horizon, std::optional<double> expected = std::nullopt) {
    const auto r = oracle::eq5_identity_check(env, policy, goal, gamma, horizon, samples, rng);
    json d;
    d["exact"] = r.exact;
    d["gamma"] = gamma;
    d["horizon"] = horizon;
    d["lhs"] = r.lhs;
    d["rhs"] = r.rhs;
    d["diff"] = r.diff;
    d["se"] = r.combined_se();
    bool ok = r.exact ? std::abs(r.diff) < 1e-9 : std::abs(r.diff) <= 4.0 * r.combined_se() + 1e-12;
    if (expected) {
      d["expected"] = *expected;
      ok = ok && std::abs(r.lhs - *expected) < 1e-9 && std::abs(r.rhs - *expected) < 1e-9;
    }
    report.cases.push_back(make_case("eq5", name, ok, d));
  };

  // Deterministic corridors walked to the end: K steps cost K(K+1)/2 at gamma 1.
  for (int k : {3, 5, 8}) {
    const auto env = GridMaze::corridor(k + 1, 3 * k);
    const auto policy = oracle::deterministic_policy(std::vector<ActionId>(static_cast<std::size_t>(k + 1), GridMaze::kRight),
                                                     GridMaze::kActionCount);
    record("corridor_right_K" + std::to_string(k), env, policy, k, 1.0, 3 * k, -0.5 * k * (k + 1));
  }
  for (double gamma : {0.9, 0.99}) {
    const auto env = GridMaze::corridor(7, 12);
    const auto policy = oracle::deterministic_policy(std::vector<ActionId>(7, GridMaze::kRight), GridMaze::kActionCount);
    record("corridor_right_gamma_" + std::to_string(gamma).substr(0, 4), env, policy, 6, gamma, 12);
  }
  // Deterministic policies on random MDPs, some of which never reach the goal.
  for (std::uint64_t seed : {11u, 12u, 13u, 14u}) {
    const RandomDeterministicMdp env(seed, 12, 3);
    std::vector<ActionId> actions;
    for (StateId s = 0; s < env.state_count(); ++s) actions.push_back(static_cast<ActionId>((s * 7 + seed) % 3));
    record("random_mdp_deterministic_" + std::to_string(seed), env, oracle::deterministic_policy(actions, 3),
           env.goal(), 0.95, env.horizon());
  }
  // Stochastic dynamics.
  for (double p : {0.1, 0.3, 0.5, 0.9}) {
    const PathologicalMdp env(p, 20);
    const auto risky = oracle::deterministic_policy(std::vector<ActionId>(6, PathologicalMdp::kTakeRisky), 2);
    record("pathological_risky_p" + std::to_string(p).substr(0, 3), env, risky, PathologicalMdp::kGoal, 0.99, 20);
  }
  {
    const PathologicalMdp env(0.5, 20);
    record("pathological_uniform_p0.5", env, oracle::uniform_policy(env), PathologicalMdp::kGoal, 0.99, 20);
  }
  // Stochastic policies.
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const RandomDeterministicMdp env(seed, 8, 2);
    record("random_mdp_uniform_" + std::to_string(seed), env, oracle::uniform_policy(env), env.goal(),
           seed % 2 ? 0.9 : 0.99, env.horizon());
  }
  for (double gamma : {0.95, 1.0}) {
    const auto env = GridMaze::parse("S..\n.#.\n..G\n", 12);
    const StateId goal = env.state_at(*env.goal_hint());
    record("small_maze_uniform_gamma_" + std::to_string(gamma).substr(0, 4), env, oracle::uniform_policy(env), goal,
           gamma, 12);
  }
  {
    const auto env = GridMaze::corridor(5, 10);
    record("corridor_uniform", env, oracle::uniform_policy(env), 4, 0.97, 10);
  }
  report.seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------------------

SuiteReport pathological(const SuiteOptions&) {
  const auto start = Clock::now();
  SuiteReport report{"pathological", {}, 0.0};
  constexpr double gamma = 0.99;
  constexpr double d_max = 20.0;
  constexpr int horizon = 20;
  // Frozen output of the exact evaluator for (gamma 0.99, D_max 20, T 20).
  constexpr double kGoldenCrossover = 0.99899494949494949;

  const std::vector<double> grid{0.01, 0.1, 0.5, 0.99};
  const auto analysis = oracle::pathological_branch_analysis(grid, gamma, d_max, horizon);
  for (const auto& row : analysis.rows) {
    json d;
    d["p"] = row.p;
    d["greedy"] = row.greedy == PathologicalMdp::kTakeRisky ? "risky" : "safe";
    d["cumulative"] = row.cumulative == PathologicalMdp::kTakeRisky ? "risky" : "safe";
    d["q_risky"] = row.q_risky;
    d["q_safe"] = row.q_safe;
    const bool ok = row.greedy == PathologicalMdp::kTakeRisky &&
                    (row.p < analysis.crossover ? row.cumulative == PathologicalMdp::kTakeSafe
                                                : row.cumulative == PathologicalMdp::kTakeRisky);
    report.cases.push_back(make_case("pathological", "branch_p" + std::to_string(row.p).substr(0, 4), ok, d));
  }
  {
    json d;
    d["crossover"] = analysis.crossover;
    d["golden"] = kGoldenCrossover;
    report.cases.push_back(
        make_case("pathological", "crossover", std::abs(analysis.crossover - kGoldenCrossover) < 1e-9, d));
  }
  for (double p : {0.9995, 1.0}) {
    const auto row = oracle::pathological_branch_row(p, gamma, d_max, horizon);
    json d;
    d["p"] = p;
    d["q_risky"] = row.q_risky;
    d["q_safe"] = row.q_safe;
    const bool ok = row.greedy == PathologicalMdp::kTakeRisky && row.cumulative == PathologicalMdp::kTakeRisky;
    report.cases.push_back(make_case("pathological", "above_crossover_p" + std::to_string(p).substr(0, 6), ok, d));
  }
  report.seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------------------

SuiteReport gradcheck(const SuiteOptions& options) {
  const auto start = Clock::now();
  SuiteReport report{"gradcheck", {}, 0.0};
  const auto maze = GridMaze::parse("S....\n.##..\n.....\n..#.G\n", 20);
  Rng rng = make_rng(options.seed, 0x6C);
  std::vector<Trajectory> walks;
  TrajectoryPool pool(10000);
  for (int k = 0; k < 20; ++k) {
    Trajectory t;
    StateId s = static_cast<StateId>(uniform_int(rng, 0, maze.state_count() - 1));
    t.states.push_back(s);
    for (int i = 0; i < 15; ++i) {
      const auto a = static_cast<ActionId>(uniform_int(rng, 0, GridMaze::kActionCount - 1));
      s = step(maze, s, a, rng).next_state;
      t.actions.push_back(a);
      t.states.push_back(s);
    }
    pool.add(std::move(t));
  }

  constexpr double h = 1e-6;
  constexpr double tolerance = 1e-4;
  const int configs = std::max(options.seeds, 1);
  double worst = 0.0;
  int failures = 0;
  for (int k = 0; k < configs; ++k) {
    const int width = static_cast<int>(uniform_int(rng, 2, 12));
    ParametricDistance model(maze, 20.0, 3e-4, {width, width}, options.seed + static_cast<std::uint64_t>(k));
    Mlp& net = model.network();
    Eigen::VectorXd params(net.parameter_count());
    const double scale = 0.1 + 1.4 * uniform_real(rng);
    for (Eigen::Index i = 0; i < params.size(); ++i) params(i) = scale * (2.0 * uniform_real(rng) - 1.0);
    net.set_parameters(params);

    const auto batch = sample_pairs(pool, 8, rng);
    const Eigen::MatrixXd x = model.encode(batch);
    Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) y(static_cast<Eigen::Index>(b)) = batch[b].gap;

    Eigen::VectorXd analytic;
    net.loss_and_gradient(x, y, analytic);
    Eigen::VectorXd numeric(params.size());
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      Eigen::VectorXd p = params;
      p(i) += h;
      net.set_parameters(p);
      const double up = net.loss(x, y);
      p(i) -= 2.0 * h;
      net.set_parameters(p);
      const double down = net.loss(x, y);
      numeric(i) = (up - down) / (2.0 * h);
    }
    net.set_parameters(params);
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-12});
    const double rel = (analytic - numeric).norm() / denom;
    worst = std::max(worst, rel);
    if (rel >= tolerance) {
      ++failures;
      json d;
      d["config"] = k;
      d["hidden"] = width;
      d["relative_error"] = rel;
      report.cases.push_back(make_case("gradcheck", "config_" + std::to_string(k), false, d));
    }
  }
  json d;
  d["configs"] = configs;
  d["max_relative_error"] = worst;
  d["tolerance"] = tolerance;
  report.cases.push_back(make_case("gradcheck", "all_configs", failures == 0, d));
  report.seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------------------

SuiteReport bfs_optimality(const SuiteOptions& options) {
  const auto start = Clock::now();
  SuiteReport report{"bfs_optimality", {}, 0.0};
  Rng rng = make_rng(options.seed, 0xBF5);
  const int count = std::min(options.seeds, 20);
  for (int k = 0; k < count; ++k) {
    const std::uint64_t seed = options.seed + static_cast<std::uint64_t>(k);
    const RandomDeterministicMdp env(seed, 10 + k % 10, 3);
    const auto bfs = oracle::bfs_distance(env);
    std::vector<ActionId> actions;
    for (StateId s = 0; s < env.state_count(); ++s) actions.push_back(static_cast<ActionId>(uniform_int(rng, 0, 2)));
    const auto tables = {oracle::exact_policy_distance(env, oracle::deterministic_policy(actions, 3), env.horizon(), 1, rng),
                         oracle::exact_policy_distance(env, oracle::uniform_policy(env), env.horizon(), 200, rng)};
    int below = 0;
    for (const auto& table : tables) {
      for (StateId s = 0; s < env.state_count(); ++s) {
        for (StateId t = 0; t < env.state_count(); ++t) {
          if (oracle::reached(table(s, t)) && table(s, t) < bfs(s, t) - 1e-9) ++below;
        }
      }
    }
    json d;
    d["seed"] = seed;
    d["pairs_below_shortest_path"] = below;
    report.cases.push_back(make_case("bfs_optimality", "seed_" + std::to_string(seed), below == 0, d));
  }
  report.seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"appendixB", "eq5", "pathological", "gradcheck", "bfs_optimality"};
  return names;
}

SuiteReport run_suite(const std::string& name, const SuiteOptions& options) {
  if (name == "appendixB") return appendix_b(options);
  if (name == "eq5") return eq5(options);
  if (name == "pathological") return pathological(options);
  if (name == "gradcheck") return gradcheck(options);
  if (name == "bfs_optimality") return bfs_optimality(options);
  throw ContractViolation("unknown verification suite '" + name + "'");
}

}  // namespace ddl::verify
