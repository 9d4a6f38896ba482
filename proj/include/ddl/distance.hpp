#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "ddl/common.hpp"
#include "ddl/env.hpp"
#include "ddl/mlp.hpp"
#include "ddl/trajectory.hpp"

namespace ddl {

/// Two states from one trajectory, `gap` = j - i steps apart.
struct PairSample {
  StateId first = kNoState;
  StateId second = kNoState;
  int gap = 0;
};

/// Draws pairs with the sampling structure of the regression loss: a
/// trajectory uniformly, i ~ U[0, L], then j ~ U[i, L].
std::vector<PairSample> sample_pairs(const TrajectoryPool& pool, int count, Rng& rng);

struct FitStats {
  std::vector<double> step_losses;  // mean 0.5 * squared error per step, before the update
  double mean_loss() const;
};

/// Estimate of the expected number of steps the current policy takes to
/// get from one state to another.
class DistanceModel {
 public:
  virtual ~DistanceModel() = default;

  /// Non-negative estimate in time steps.
  virtual double predict(StateId from, StateId to) const = 0;

  /// One regression step on `batch`; returns the batch loss before the step.
  virtual double update(std::span<const PairSample> batch) = 0;

  /// Whether regression has ever seen this pair. Parametric models
  /// generalize, so they report true everywhere.
  virtual bool observed(StateId from, StateId to) const = 0;

  virtual double d_max() const = 0;
  virtual void save(std::ostream& out) const = 0;
  virtual std::unique_ptr<DistanceModel> clone() const = 0;
};

/// Dense (state, state) table of running means.
class TabularDistance final : public DistanceModel {
 public:
  /// `count_cap` > 0 switches a cell to a constant 1/count_cap step once it
  /// has that many samples, turning the mean into a recency-weighted one.
  TabularDistance(int state_count, double d_max, std::int64_t count_cap = 0);

  double predict(StateId from, StateId to) const override;
  double update(std::span<const PairSample> batch) override;
  bool observed(StateId from, StateId to) const override { return count(from, to) > 0; }
  double d_max() const override { return d_max_; }

  /// CSV with header `s,s_prime,mean,count`, one row per observed pair.
  void save(std::ostream& out) const override;
  static TabularDistance load(std::istream& in, int state_count, double d_max);
  std::unique_ptr<DistanceModel> clone() const override;

  std::int64_t count(StateId from, StateId to) const { return counts_[index(from, to)]; }
  double mean(StateId from, StateId to) const { return means_[index(from, to)]; }
  int state_count() const { return n_; }

  /// Moves one cell toward `target` with step `rate`; used by the TD baseline.
  void td_update(StateId from, StateId to, double target, double rate);

 private:
  std::size_t index(StateId from, StateId to) const;

  int n_;
  double d_max_;
  std::int64_t cap_;
  std::vector<double> means_;
  std::vector<std::int64_t> counts_;
};

/// MLP over concatenated state features, trained with Adam on the squared
/// regression loss.
class ParametricDistance final : public DistanceModel {
 public:
  ParametricDistance(const Environment& env, double d_max, double learning_rate = 3e-4,
                     std::vector<int> hidden = {64, 64}, std::uint64_t seed = 0);

  double predict(StateId from, StateId to) const override;
  double update(std::span<const PairSample> batch) override;
  bool observed(StateId, StateId) const override { return true; }
  double d_max() const override { return d_max_; }

  /// Text checkpoint: `ddl-parametric-distance v1`, layer sizes, d_max and
  /// then one parameter per line.
  void save(std::ostream& out) const override;
  void load_parameters(std::istream& in);
  std::unique_ptr<DistanceModel> clone() const override;

  Eigen::VectorXd encode(StateId from, StateId to) const;
  Eigen::MatrixXd encode(std::span<const PairSample> batch) const;
  Mlp& network() { return net_; }
  const Mlp& network() const { return net_; }

 private:
  std::vector<std::vector<double>> features_;
  double d_max_;
  Mlp net_;
  Adam optimizer_;
};

/// Runs `steps` regression steps of `batch_size` pairs each.
FitStats fit(DistanceModel& model, const TrajectoryPool& pool, int steps, int batch_size, Rng& rng);

/// TD(0) baseline toward a fixed goal: each step draws `batch_size`
/// transitions from the pool and moves d(s, goal) toward
/// 0 if s is the goal, else min(d_max, 1 + td_gamma * d(s', goal)).
FitStats td_fit(TabularDistance& model, const TrajectoryPool& pool, StateId goal, int steps,
                int batch_size, double learning_rate, double td_gamma, Rng& rng);

}  // namespace ddl
