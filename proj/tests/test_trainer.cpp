#include "doctest.h"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ddl/trainer.hpp"
#include "support.hpp"

using namespace ddl;
using ddl::testing::source_path;

namespace {

TrainerConfig small_maze_config() {
  TrainerConfig c;
  c.env = source_path("mazes/smaze9.txt").string();
  c.method = Method::FixedGoal;
  c.horizon_T = 100;
  c.total_env_steps = 40000;
  c.N_pi = 10;
  return c;
}

}  // namespace

TEST_CASE("ratio parsing is exact") {
  CHECK(Ratio::parse("1/16").num == 1);
  CHECK(Ratio::parse("1/16").den == 16);
  CHECK(Ratio::parse("2/4").str() == "1/2");
  CHECK(Ratio::parse("0.25").str() == "1/4");
  CHECK(Ratio::parse("3").str() == "3/1");
  CHECK_THROWS_AS(Ratio::parse("1/0"), ConfigError);
  CHECK_THROWS_AS(Ratio::parse("-1/2"), ConfigError);
  CHECK_THROWS_AS(Ratio::parse("abc"), ConfigError);
}

TEST_CASE("defaults match the 1/16 ratio and 100k on-policy pool") {
  const TrainerConfig c;
  CHECK(c.distance_steps_per_env_step.str() == "1/16");
  CHECK(c.on_policy_pool_capacity == 100000);
  CHECK(c.gamma == 0.99);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config parsing, validation and round trip") {
  auto c = TrainerConfig::parse(
      "# comment\n"
      "gamma = 0.9\n"
      "method=DDLUS   # trailing\n"
      "\n"
      "distance_steps_per_env_step=1/4\n");
  CHECK(c.gamma == 0.9);
  CHECK(c.method == Method::DDLUS);
  CHECK(c.distance_steps_per_env_step.str() == "1/4");

  const auto again = TrainerConfig::parse(c.dump());
  CHECK(again.dump() == c.dump());
  for (const auto& key : TrainerConfig::keys()) CHECK(c.dump().find(key + "=") != std::string::npos);

  CHECK_THROWS_AS(c.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("gamma", "fast"), ConfigError);
  CHECK_THROWS_AS(TrainerConfig::parse("gamma\n"), ConfigError);

  c.set("gamma", "1.5");
  try {
    c.validate();
    FAIL("validate accepted gamma=1.5");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("gamma") != std::string::npos);
  }

  TrainerConfig td;
  td.baseline = Baseline::TD;
  td.distance_kind = DistanceKind::Parametric;
  CHECK_THROWS_AS(td.validate(), ConfigError);
  TrainerConfig slate;
  slate.slate_size = 17;
  CHECK_THROWS_AS(slate.validate(), ConfigError);
}

TEST_CASE("environment and goal specifications") {
  TrainerConfig c;
  c.env = "corridor:7";
  auto env = make_environment(c);
  CHECK(env->state_count() == 7);
  CHECK(resolve_goal(*env, "") == 6);
  CHECK(resolve_goal(*env, "3,0") == 3);
  CHECK(resolve_goal(*env, "4") == 4);
  CHECK_THROWS_AS(resolve_goal(*env, "9,0"), ConfigError);

  c.env = "pathological:0.25";
  env = make_environment(c);
  CHECK(env->state_count() == 6);
  CHECK(resolve_goal(*env, "") == PathologicalMdp::kGoal);

  c.env = "random:3:10:2";
  env = make_environment(c);
  CHECK(env->state_count() == 10);

  c.env = "mazes/smaze9.txt";
  CHECK(make_environment(c, source_path(""))->state_count() == 67);
  c.env = "nowhere.txt";
  CHECK_THROWS_AS(make_environment(c), ConfigError);

  c.env = "corridor:5";
  env = make_environment(c);
  for (const char* p : {"bfs", "xaxis", "constant:2", "keep", "silent"}) {
    c.provider = p;
    CHECK(make_provider(c, *env)->name() == std::string(p));
  }
  c.provider = "http";
  CHECK_THROWS_AS(make_provider(c, *env), ConfigError);
}

TEST_CASE("episode records serialize with a fixed key order") {
  EpisodeRecord r;
  r.episode = 3;
  r.env_steps = 120;
  r.final_distance_to_goal = 2.0;
  r.goal = 5;
  CHECK(r.to_json() ==
        R"({"episode":3,"env_steps":120,"final_distance_to_goal":2.0,"distance_loss":null,"queries_used":0,"goal":5})");
}

TEST_CASE("evaluation of a known policy") {
  const auto corridor = GridMaze::corridor(3, 10);
  Rng rng = make_rng(1);
  const auto r = evaluate(corridor, [](StateId, Rng&) { return GridMaze::kRight; }, 2, 20, rng);
  CHECK(r.success_rate == 1.0);
  CHECK(r.mean_steps == 2.0);
  const auto at_start = evaluate(corridor, [](StateId, Rng&) { return GridMaze::kLeft; }, 0, 20, rng);
  CHECK(at_start.success_rate == 1.0);
  CHECK(at_start.mean_steps == 0.0);
  const auto never = evaluate(corridor, [](StateId, Rng&) { return GridMaze::kLeft; }, 2, 5, rng);
  CHECK(never.success_rate == 0.0);
}

TEST_CASE("uniform random policy on the 15x15 maze, reported against a Monte Carlo reference") {
  const auto maze = GridMaze::load(source_path("mazes/smaze15.txt"), 150);
  const StateId goal = maze.state_at(*maze.goal_hint());
  const auto uniform = [](StateId, Rng& r) { return static_cast<ActionId>(uniform_int(r, 0, 4)); };
  Rng a = make_rng(2), b = make_rng(3);
  const auto r = evaluate(maze, uniform, goal, 200, a);
  const auto reference = evaluate(maze, uniform, goal, 2000, b);
  MESSAGE("random-walk success " << r.success_rate << ", reference " << reference.success_rate);
  const double se = std::sqrt(std::max(reference.success_rate * (1 - reference.success_rate), 1e-4) / 200);
  CHECK(std::abs(r.success_rate - reference.success_rate) <= 4 * se + 0.01);
  CHECK(reference.success_rate < 0.2);
}

TEST_CASE("heatmap export") {
  const auto maze = GridMaze::parse("S.#\n...\n", 10);
  TabularDistance d(maze.state_count(), 10.0);
  std::ostringstream untrained;
  export_heatmap(d, maze, 0, untrained);
  CHECK(untrained.str() == "10,10,-1\n10,10,10\n");

  const std::vector<PairSample> batch{{0, 0, 0}, {1, 0, 1}};
  d.update(batch);
  std::ostringstream trained;
  export_heatmap(d, maze, 0, trained);
  CHECK(trained.str() == "0,1,-1\n10,10,10\n");
}

TEST_CASE("queries are issued exactly on their cadence until the budget runs out") {
  TrainerConfig c = small_maze_config();
  c.method = Method::DDLfP;
  c.hidden_goal = "8,7";
  c.query_interval_env_steps = 10000;
  c.query_budget = 10;
  c.total_env_steps = 125000;
  c.N_pi = 2;
  const auto env = make_environment(c);
  auto provider = make_provider(c, *env);
  Trainer trainer(*env, c, provider.get());
  trainer.run();
  REQUIRE(trainer.queries().size() == 10);
  for (std::size_t k = 0; k < 10; ++k)
    CHECK(trainer.queries()[k].query.issued_at_env_step == static_cast<std::int64_t>(10000 * (k + 1)));
  CHECK(trainer.queries_used() == 10);
  CHECK(trainer.env_steps() == 125000);
  CHECK(trainer.distance_steps() == 125000 / 16);
}

TEST_CASE("a provider that always keeps leaves the goal at its first choice") {
  TrainerConfig c = small_maze_config();
  c.method = Method::DDLfP;
  c.query_interval_env_steps = 1000;
  c.query_budget = 6;
  c.total_env_steps = 8000;
  const auto env = make_environment(c);
  int calls = 0;
  CallbackPreference first_then_keep([&](const PreferenceQuery& q) -> std::optional<PreferenceResponse> {
    return PreferenceResponse{q.query_id, calls++ == 0 ? 0 : q.keep_index()};
  });
  Trainer trainer(*env, c, &first_then_keep);
  trainer.run();
  REQUIRE(trainer.queries().size() == 6);
  const StateId chosen = trainer.queries().front().goal.state;
  CHECK(chosen != kNoState);
  for (const auto& q : trainer.queries()) CHECK(q.goal.state == chosen);
  CHECK(trainer.goal().state == chosen);
}

TEST_CASE("fixed-goal training on the 9x9 maze ends within one cell of the goal") {
  TrainerConfig c = small_maze_config();
  const auto env = make_environment(c);
  Trainer trainer(*env, c);
  trainer.run();
  const auto& records = trainer.records();
  REQUIRE(records.size() > 20);
  double tail = 0.0;
  for (auto it = records.end() - 20; it != records.end(); ++it) tail += *it->final_distance_to_goal;
  CHECK(tail / 20 <= 1.0);
  CHECK(trainer.evaluate(trainer.goal().state, 20).success_rate == 1.0);
  const auto error = trainer.distance_error(trainer.goal().state);
  REQUIRE(error);
  CHECK(error->states > 0);
}

TEST_CASE("same seed, same trajectory of records") {
  TrainerConfig c = small_maze_config();
  c.total_env_steps = 5000;
  c.method = Method::DDLUS;
  const auto env = make_environment(c);
  Trainer a(*env, c), b(*env, c);
  a.run();
  b.run();
  REQUIRE(a.records().size() == b.records().size());
  for (std::size_t k = 0; k < a.records().size(); ++k) CHECK(a.records()[k].to_json() == b.records()[k].to_json());
  c.seed = 1;
  Trainer other(*env, c);
  other.run();
  CHECK(other.records().back().to_json() != a.records().back().to_json());
}

TEST_CASE("checkpoint failure aborts with metrics flushed") {
  const auto dir = std::filesystem::temp_directory_path() / "ddl_trainer_ckpt_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto blocker = dir / "blocked";
  std::ofstream(blocker) << "not a directory";

  TrainerConfig c = small_maze_config();
  c.total_env_steps = 3000;
  c.checkpoint_every = 3;
  const auto env = make_environment(c);
  Trainer trainer(*env, c);
  std::ostringstream metrics;
  CHECK_THROWS(trainer.run(&metrics, blocker));
  CHECK(trainer.episodes() == 3);
  std::istringstream lines(metrics.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    CHECK(nlohmann::json::parse(line)["episode"] == ++count);
  }
  CHECK(count == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoints hold distance, policy and config") {
  const auto dir = std::filesystem::temp_directory_path() / "ddl_trainer_ckpt_files";
  std::filesystem::remove_all(dir);
  TrainerConfig c = small_maze_config();
  c.total_env_steps = 1000;
  const auto env = make_environment(c);
  Trainer trainer(*env, c);
  trainer.run();
  trainer.write_checkpoint(dir);
  CHECK(std::filesystem::exists(dir / "distance.csv"));
  CHECK(std::filesystem::exists(dir / "policy.csv"));
  const auto saved = TrainerConfig::load(dir / "config.cfg");
  CHECK(saved.dump() == c.dump());
  std::filesystem::remove_all(dir);
}
