#include "doctest.h"

#include <map>
#include <set>
#include <sstream>

#include "ddl/distance.hpp"
#include "ddl/oracle.hpp"
#include "ddl/policy.hpp"
#include "support.hpp"

using namespace ddl;

namespace {

Trajectory path(std::vector<StateId> states) {
  Trajectory t;
  t.states = std::move(states);
  t.actions.assign(t.states.size() - 1, 0);
  return t;
}

TrajectoryPool pool_of(std::vector<Trajectory> ts) {
  TrajectoryPool pool(1 << 20);
  for (auto& t : ts) pool.add(std::move(t));
  return pool;
}

// Moves toward `goal` along shortest paths, first such action by index.
std::vector<ActionId> shortest_path_actions(const Environment& env, StateId goal) {
  const auto bfs = oracle::bfs_distance(env);
  std::vector<ActionId> actions(static_cast<std::size_t>(env.state_count()), 0);
  for (StateId s = 0; s < env.state_count(); ++s) {
    double best = bfs(s, goal);
    for (ActionId a = 0; a < env.action_count(); ++a) {
      const StateId next = env.outcomes(s, a).front().next;
      if (bfs(next, goal) < best) {
        best = bfs(next, goal);
        actions[static_cast<std::size_t>(s)] = a;
      }
    }
  }
  return actions;
}

}  // namespace

TEST_CASE("pairs from a length-2 trajectory only have gaps 0, 1, 2") {
  const auto pool = pool_of({path({5, 6, 7})});
  Rng rng = make_rng(1);
  std::set<int> gaps;
  for (const auto& p : sample_pairs(pool, 2000, rng)) {
    REQUIRE(p.gap >= 0);
    REQUIRE(p.gap <= 2);
    CHECK(p.second - p.first == p.gap);
    if (p.gap == 0) CHECK(p.first == p.second);
    gaps.insert(p.gap);
  }
  CHECK(gaps == std::set<int>{0, 1, 2});
}

TEST_CASE("sampling an empty pool is an error") {
  TrajectoryPool pool(10);
  Rng rng = make_rng(2);
  CHECK_THROWS_AS(sample_pairs(pool, 4, rng), ContractViolation);
  TabularDistance d(3, 10.0);
  CHECK_THROWS_AS(fit(d, pool, 1, 4, rng), ContractViolation);
}

TEST_CASE("zero-gap frequency matches exhaustive enumeration of (i, j)") {
  const int T = 12;
  std::vector<StateId> states(T + 1);
  for (int i = 0; i <= T; ++i) states[static_cast<std::size_t>(i)] = i;
  const auto pool = pool_of({path(states)});

  // Exact probability by walking every (i, j) cell with its weight.
  double expected = 0.0;
  for (int i = 0; i <= T; ++i)
    for (int j = i; j <= T; ++j)
      if (j == i) expected += (1.0 / (T + 1)) * (1.0 / (T - i + 1));

  Rng rng = make_rng(3);
  const int n = 100000;
  int zeros = 0;
  for (const auto& p : sample_pairs(pool, n, rng)) zeros += p.gap == 0;
  const double sigma = std::sqrt(expected * (1 - expected) / n);
  CHECK(std::abs(zeros / double(n) - expected) < 3 * sigma);
}

TEST_CASE("tabular mean minimises squared loss") {
  TabularDistance d(4, 50.0);
  const std::vector<PairSample> batch{{0, 1, 2}, {0, 1, 4}};
  d.update(batch);
  CHECK(d.predict(0, 1) == doctest::Approx(3.0));
  CHECK(d.count(0, 1) == 2);
  CHECK(d.predict(1, 0) == 50.0);
  CHECK_FALSE(d.observed(1, 0));
}

TEST_CASE("count cap turns the mean into a constant-step average") {
  TabularDistance d(2, 50.0, 2);
  const std::vector<PairSample> a{{0, 1, 0}}, b{{0, 1, 4}}, c{{0, 1, 8}};
  d.update(a);
  d.update(b);
  CHECK(d.predict(0, 1) == doctest::Approx(2.0));
  d.update(c);
  CHECK(d.predict(0, 1) == doctest::Approx(5.0));
}

TEST_CASE("chain under the always-right policy regresses to the step count") {
  const auto chain = GridMaze::corridor(4, 10);
  const auto right = oracle::deterministic_policy(std::vector<ActionId>(4, GridMaze::kRight), GridMaze::kActionCount);
  Rng rng = make_rng(4);
  const auto truth = oracle::exact_policy_distance(chain, right, 3, 1, rng);
  REQUIRE(truth(0, 3) == 3.0);

  RolloutConfig rc;
  rc.horizon = 3;
  rc.explore_switch_fraction = 1.0;
  TrajectoryPool pool(1000);
  for (int k = 0; k < 5; ++k)
    pool.add(rollout(chain, [](StateId, Rng&) { return GridMaze::kRight; }, 3, rc, rng));
  TabularDistance d(4, 10.0);
  fit(d, pool, 200, 32, rng);
  CHECK(std::abs(d.predict(0, 3) - truth(0, 3)) <= 0.01);
}

TEST_CASE("maze under a fixed policy matches the conditional-mean oracle") {
  const auto maze = GridMaze::parse(
                        "S....\n"
                        ".##..\n"
                        "...#.\n"
                        ".#...\n",
                        30)
                        .with(30, StartMode::Uniform);
  const StateId goal = maze.state_at({4, 3});
  const auto actions = shortest_path_actions(maze, goal);
  const auto policy = oracle::deterministic_policy(actions, GridMaze::kActionCount);
  Rng rng = make_rng(5);
  const auto truth = oracle::exact_policy_distance(maze, policy, 30, 1, rng);

  RolloutConfig rc;
  rc.horizon = 30;
  rc.explore_switch_fraction = 1.0;
  TrajectoryPool pool(100000);
  for (int k = 0; k < 400; ++k)
    pool.add(rollout(maze, [&](StateId s, Rng&) { return actions[static_cast<std::size_t>(s)]; }, goal, rc, rng));
  TabularDistance d(maze.state_count(), 30.0);
  fit(d, pool, 2000, 64, rng);

  double worst = 0.0;
  int compared = 0;
  for (StateId s = 0; s < maze.state_count(); ++s)
    for (StateId t = 0; t < maze.state_count(); ++t) {
      if (!d.observed(s, t)) continue;
      REQUIRE(oracle::reached(truth(s, t)));
      worst = std::max(worst, std::abs(d.predict(s, t) - truth(s, t)));
      ++compared;
    }
  CHECK(compared > 50);
  CHECK(worst <= 0.5);
  for (StateId s = 0; s < maze.state_count(); ++s)
    if (d.observed(s, s)) CHECK(d.predict(s, s) <= 0.1);
}

TEST_CASE("untrained tabular model predicts d_max everywhere") {
  TabularDistance d(6, 17.0);
  for (StateId s = 0; s < 6; ++s)
    for (StateId t = 0; t < 6; ++t) CHECK(d.predict(s, t) == 17.0);
  CHECK_THROWS_AS(d.predict(0, 6), ContractViolation);
}

TEST_CASE("pathological risky branch: conditional distance from s0 to goal is 2") {
  using P = PathologicalMdp;
  for (double p : {0.05, 0.3, 0.9}) {
    const P env(p);
    Rng rng = make_rng(6);
    RolloutConfig rc;
    rc.horizon = 20;
    rc.explore_switch_fraction = 1.0;
    TrajectoryPool pool(100000);
    for (int k = 0; k < 400; ++k)
      pool.add(rollout(env, [](StateId, Rng&) { return P::kTakeRisky; }, P::kGoal, rc, rng));
    TabularDistance d(6, 20.0);
    fit(d, pool, 400, 64, rng);
    CHECK(d.predict(P::kStart, P::kGoal) == doctest::Approx(2.0));
  }
}

TEST_CASE("tabular checkpoint round trip") {
  TabularDistance d(3, 9.0);
  const std::vector<PairSample> batch{{0, 2, 2}, {1, 2, 1}, {0, 2, 3}};
  d.update(batch);
  std::stringstream buffer;
  d.save(buffer);
  const auto back = TabularDistance::load(buffer, 3, 9.0);
  for (StateId s = 0; s < 3; ++s)
    for (StateId t = 0; t < 3; ++t) {
      CHECK(back.predict(s, t) == d.predict(s, t));
      CHECK(back.count(s, t) == d.count(s, t));
    }
}

TEST_CASE("TD baseline: one step from the goal converges to 1") {
  const auto corridor = GridMaze::corridor(2, 5);
  const auto pool = pool_of({path({0, 1})});
  TabularDistance d(2, 20.0);
  Rng rng = make_rng(7);
  td_fit(d, pool, 1, 200, 8, 0.1, 1.0, rng);
  CHECK(std::abs(d.predict(0, 1) - 1.0) <= 0.05);
}

TEST_CASE("TD baseline on a chain reaches the Bellman fixpoint") {
  // With td_gamma = 1 the fixpoint of d(s) = 1 + d(s + 1), d(g) = 0 is g - s.
  const auto pool = pool_of({path({0, 1, 2, 3})});
  TabularDistance d(5, 20.0);
  Rng rng = make_rng(8);
  td_fit(d, pool, 3, 2000, 8, 0.1, 1.0, rng);
  CHECK(std::abs(d.predict(0, 3) - 3.0) <= 0.1);
  CHECK(std::abs(d.predict(1, 3) - 2.0) <= 0.1);
  CHECK(std::abs(d.predict(2, 3) - 1.0) <= 0.1);
}

TEST_CASE("TD baseline leaves states that never reach the goal at d_max") {
  const auto pool = pool_of({path({0, 1, 2})});
  TabularDistance d(5, 20.0);
  Rng rng = make_rng(9);
  td_fit(d, pool, 4, 200, 8, 0.1, 1.0, rng);
  for (StateId s = 0; s < 3; ++s) CHECK(d.predict(s, 4) == 20.0);
  CHECK_THROWS_AS(td_fit(d, pool, 5, 1, 8, 0.1, 1.0, rng), ContractViolation);
}

TEST_CASE("parametric model learns a corridor and stays non-negative") {
  const auto corridor = GridMaze::corridor(6, 10);
  const auto pool = pool_of({path({0, 1, 2, 3, 4, 5})});
  ParametricDistance d(corridor, 10.0, 3e-3, {32, 32}, 1);
  Rng rng = make_rng(10);
  const auto stats = fit(d, pool, 1500, 64, rng);
  const double early = stats.step_losses.front();
  const double late = FitStats{{stats.step_losses.end() - 100, stats.step_losses.end()}}.mean_loss();
  CHECK(late < 0.1 * early);
  CHECK(std::abs(d.predict(0, 5) - 5.0) < 1.0);
  CHECK(std::abs(d.predict(1, 3) - 2.0) < 1.0);
  for (StateId s = 0; s < 6; ++s)
    for (StateId t = 0; t < 6; ++t) CHECK(d.predict(s, t) >= 0.0);

  std::stringstream buffer;
  d.save(buffer);
  ParametricDistance copy(corridor, 10.0, 3e-3, {32, 32}, 99);
  copy.load_parameters(buffer);
  CHECK(copy.predict(0, 5) == doctest::Approx(d.predict(0, 5)).epsilon(1e-12));
}

TEST_CASE("mlp gradient agrees with central differences") {
  Rng rng = make_rng(11);
  Mlp net({4, 5, 3, 1}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 7);
  Eigen::VectorXd y = Eigen::VectorXd::Random(7).cwiseAbs() * 3.0;
  Eigen::VectorXd grad;
  net.loss_and_gradient(x, y, grad);
  const Eigen::VectorXd theta = net.parameters();
  const double h = 1e-6;
  Eigen::VectorXd numeric(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd plus = theta, minus = theta;
    plus(k) += h;
    minus(k) -= h;
    net.set_parameters(plus);
    const double lp = net.loss(x, y);
    net.set_parameters(minus);
    const double lm = net.loss(x, y);
    numeric(k) = (lp - lm) / (2 * h);
  }
  net.set_parameters(theta);
  CHECK((grad - numeric).norm() / std::max(1e-12, grad.norm() + numeric.norm()) < 1e-6);
}
