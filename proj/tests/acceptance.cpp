// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ddl/cli.hpp"
#include "ddl/oracle.hpp"
#include "ddl/trainer.hpp"
#include "ddl/verify.hpp"
#include "support.hpp"

using namespace ddl;
using ddl::testing::source_path;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool passed;
  std::string details;
};

TrainerConfig load_config(const std::string& name) { return TrainerConfig::load(source_path("configs/" + name)); }

std::unique_ptr<Environment> environment_for(const TrainerConfig& c) {
  return make_environment(c, source_path("configs"));
}

// 1. Exact policy iteration on 100 random deterministic MDPs, under 60 s.
Verdict criterion_1() {
  verify::SuiteOptions o;
  o.seeds = 100;
  const auto r = verify::appendix_b(o);
  std::ostringstream s;
  s << "cases=" << r.cases.size() << " violations=" << r.failures() << " seconds=" << r.seconds << " (limit 60)";
  return {r.passed() && r.seconds < 60.0, s.str()};
}

// 2. Learned distance on the 9x9 maze ranks cells like BFS.
Verdict criterion_2() {
  const auto c = load_config("smaze9_heatmap.cfg");
  const auto env = environment_for(c);
  Trainer trainer(*env, c);
  trainer.run();
  const StateId goal = trainer.goal().state;
  const auto bfs = oracle::bfs_distance(*env);
  std::vector<double> learned, truth, learned_visited, truth_visited;
  for (StateId s = 0; s < env->state_count(); ++s) {
    const double d = bfs(s, goal);
    if (!oracle::reached(d)) continue;
    learned.push_back(trainer.distance().predict(s, goal));
    truth.push_back(d);
    if (trainer.visit_counts()[static_cast<std::size_t>(s)] >= 10) {
      learned_visited.push_back(learned.back());
      truth_visited.push_back(d);
    }
  }
  const double all = ddl::testing::spearman(learned, truth);
  const double visited = ddl::testing::spearman(learned_visited, truth_visited);
  std::ostringstream s;
  s << "spearman_free=" << all << " (>= 0.95) spearman_visited=" << visited << " (>= 0.99) cells=" << truth.size()
    << " visited=" << truth_visited.size();
  return {all >= 0.95 && visited >= 0.99, s.str()};
}

// 3. Two-branch MDP: exact analysis, frozen crossover, learned pipeline.
Verdict criterion_3() {
  constexpr double golden = 0.99899494949494949;
  const auto a = oracle::pathological_branch_analysis({0.01, 0.1, 0.5, 0.99}, 0.99, 20.0, 20);
  bool exact = std::abs(a.crossover - golden) < 1e-12;
  for (const auto& row : a.rows) {
    exact = exact && row.greedy == PathologicalMdp::kTakeRisky;
    if (row.p < a.crossover) exact = exact && row.cumulative == PathologicalMdp::kTakeSafe;
  }

  int safe = 0;
  for (int seed = 0; seed < 10; ++seed) {
    auto c = load_config("pathological.cfg");
    c.seed = static_cast<std::uint64_t>(seed);
    const auto env = environment_for(c);
    Trainer trainer(*env, c);
    trainer.run();
    trainer.plan_toward(PathologicalMdp::kGoal, c.eval_sweeps);
    safe += trainer.greedy_action(PathologicalMdp::kStart, PathologicalMdp::kGoal) == PathologicalMdp::kTakeSafe;
  }
  std::ostringstream s;
  s.precision(17);
  s << "exact_analysis=" << (exact ? "ok" : "wrong") << " crossover=" << a.crossover << " learned_safe=" << safe
    << "/10 (>= 9)";
  return {exact && safe >= 9, s.str()};
}

// 4. Nested and collapsed objectives agree on 20 (env, policy) pairs.
Verdict criterion_4() {
  const auto r = verify::eq5(verify::SuiteOptions{});
  std::ostringstream s;
  s << "pairs=" << r.cases.size() << " failures=" << r.failures() << " seconds=" << r.seconds << " (limit 60)";
  return {r.passed() && r.cases.size() == 20 && r.seconds < 60.0, s.str()};
}

// 5. Ten preference queries reach the hidden goal on the 15x15 maze.
Verdict criterion_5() {
  int good = 0;
  std::ostringstream s;
  s << "success=";
  for (int seed = 0; seed < 5; ++seed) {
    auto c = load_config("smaze15_ddlfp.cfg");
    c.seed = static_cast<std::uint64_t>(seed);
    const auto env = environment_for(c);
    auto provider = make_provider(c, *env);
    Trainer trainer(*env, c, provider.get());
    trainer.run();
    const auto r = trainer.evaluate(resolve_goal(*env, c.hidden_goal), 50);
    good += r.success_rate >= 0.9;
    s << (seed ? "," : "") << r.success_rate;
  }
  s << " seeds_ok=" << good << "/5 (>= 4 at >= 0.9)";
  return {good >= 4, s.str()};
}

// 6. DDLUS goals move outward along a 40-cell corridor.
Verdict criterion_6() {
  const auto c = load_config("corridor_ddlus.cfg");
  const auto env = environment_for(c);
  Trainer trainer(*env, c);
  trainer.run();
  const auto bfs = oracle::bfs_distance(*env);
  const StateId start = trainer.start_state();
  const auto& records = trainer.records();
  std::vector<double> index, distance;
  const int checkpoints = 20;
  for (int k = 1; k <= checkpoints; ++k) {
    const auto& r = records[records.size() * static_cast<std::size_t>(k) / checkpoints - 1];
    if (r.goal == kNoState) continue;
    index.push_back(k);
    distance.push_back(bfs(start, r.goal));
  }
  double reachable = 0.0;
  for (StateId s = 0; s < env->state_count(); ++s)
    if (oracle::reached(bfs(start, s))) reachable = std::max(reachable, bfs(start, s));
  const double tau = ddl::testing::kendall_tau(index, distance);
  const double final_distance = distance.empty() ? 0.0 : distance.back();
  std::ostringstream s;
  s << "kendall_tau=" << tau << " (>= 0.6) final_goal_distance=" << final_distance << " (>= " << 0.8 * reachable
    << ")";
  return {tau >= 0.6 && final_distance >= 0.8 * reachable, s.str()};
}

// 7. Regression DDL does at least as well as greedy descent and sparse reward.
Verdict criterion_7() {
  int ordered = 0;
  std::ostringstream s;
  for (int seed = 0; seed < 5; ++seed) {
    std::map<std::string, double> success;
    double td_mse = std::numeric_limits<double>::quiet_NaN();
    for (const char* baseline : {"none", "greedy", "sparse", "td"}) {
      auto c = load_config("smaze15_ablation.cfg");
      c.seed = static_cast<std::uint64_t>(seed);
      c.set("baseline", baseline);
      const auto env = environment_for(c);
      Trainer trainer(*env, c);
      trainer.run();
      const StateId goal = trainer.goal().state;
      success[baseline] = trainer.evaluate(goal, 50).success_rate;
      if (std::string(baseline) == "td") {
        if (const auto e = trainer.distance_error(goal)) td_mse = e->mse;
      }
    }
    const bool ok = success["none"] >= success["greedy"] && success["none"] >= success["sparse"];
    ordered += ok;
    s << (seed ? " | " : "") << "seed" << seed << " ddl=" << success["none"] << " greedy=" << success["greedy"]
      << " sparse=" << success["sparse"] << " td=" << success["td"] << " td_mse=" << td_mse;
  }
  s << " | ordered=" << ordered << "/5 (>= 4)";
  return {ordered >= 4, s.str()};
}

// 8. Finite differences match the analytic gradient on 100 configurations.
Verdict criterion_8() {
  const auto r = verify::gradcheck(verify::SuiteOptions{});
  const auto summary = nlohmann::json::parse(r.cases.back().details);
  const int configs = summary["configs"];
  std::ostringstream s;
  s << "configurations=" << configs << " max_relative_error=" << summary["max_relative_error"].get<double>()
    << " (< 1e-4) seconds=" << r.seconds << " (limit 10)";
  return {r.passed() && configs >= 100 && r.seconds < 10.0, s.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// 9. Two train runs with one config, seed and scripted provider write the same bytes.
Verdict criterion_9() {
  const auto root = fs::temp_directory_path() / "ddl_acceptance_determinism";
  fs::remove_all(root);
  std::string bytes[2];
  for (int k = 0; k < 2; ++k) {
    const auto dir = root / std::to_string(k);
    const std::string config = source_path("configs/smaze15_ddlfp.cfg").string();
    const std::string out = dir.string();
    const char* argv[] = {"ddl", "train", "-c", config.c_str(), "--set", "total_env_steps=20000", "-o", out.c_str()};
    std::ostringstream sink, err;
    if (cli::run(8, argv, sink, err) != cli::kExitOk) return {false, "train failed: " + err.str()};
    bytes[k] = read_file(dir / "metrics.jsonl");
  }
  fs::remove_all(root);
  std::ostringstream s;
  s << "metrics_bytes=" << bytes[0].size() << " identical=" << (bytes[0] == bytes[1] ? "yes" : "no");
  return {!bytes[0].empty() && bytes[0] == bytes[1], s.str()};
}

}  // namespace

int main() {
  const std::vector<std::function<Verdict()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                                      criterion_6, criterion_7, criterion_8, criterion_9};
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = Clock::now();
    Verdict o;
    try {
      o = criteria[k]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("%s criterion %zu: %s [%.1fs]\n", o.passed ? "PASS" : "FAIL", k + 1, o.details.c_str(), seconds);
    std::fflush(stdout);
    failed += !o.passed;
  }
  return failed == 0 ? 0 : 1;
}
