#include "ddl/distance.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace ddl {

std::vector<PairSample> sample_pairs(const TrajectoryPool& pool, int count, Rng& rng) {
  if (pool.empty()) throw ContractViolation("sample_pairs: pool is empty");
  if (count < 1) throw ContractViolation("sample_pairs: count must be positive");
  const auto& trajectories = pool.trajectories();
  std::vector<PairSample> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const auto& t = trajectories[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(trajectories.size()) - 1))];
    const int length = t.length();
    const int i = static_cast<int>(uniform_int(rng, 0, length));
    const int j = static_cast<int>(uniform_int(rng, i, length));
    pairs.push_back({t.states[static_cast<std::size_t>(i)], t.states[static_cast<std::size_t>(j)], j - i});
  }
  return pairs;
}

double FitStats::mean_loss() const {
  if (step_losses.empty()) return 0.0;
  return std::accumulate(step_losses.begin(), step_losses.end(), 0.0) /
         static_cast<double>(step_losses.size());
}

// ---------------------------------------------------------------------------

TabularDistance::TabularDistance(int state_count, double d_max, std::int64_t count_cap)
    : n_(state_count), d_max_(d_max), cap_(count_cap),
      means_(static_cast<std::size_t>(state_count) * static_cast<std::size_t>(state_count), d_max),
      counts_(static_cast<std::size_t>(state_count) * static_cast<std::size_t>(state_count), 0) {
  if (state_count < 1) throw ContractViolation("tabular distance needs at least one state");
  if (!(d_max > 0.0)) throw ContractViolation("d_max must be positive");
  if (count_cap < 0) throw ContractViolation("count cap must be non-negative");
}

std::size_t TabularDistance::index(StateId from, StateId to) const {
  if (from < 0 || from >= n_ || to < 0 || to >= n_) {
    throw ContractViolation("distance query for invalid state pair");
  }
  return static_cast<std::size_t>(from) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(to);
}

double TabularDistance::predict(StateId from, StateId to) const {
  const std::size_t k = index(from, to);
  if (counts_[k] == 0) return d_max_;
  return std::max(0.0, means_[k]);
}

double TabularDistance::update(std::span<const PairSample> batch) {
  double loss = 0.0;
  for (const auto& pair : batch) {
    const double r = predict(pair.first, pair.second) - pair.gap;
    loss += 0.5 * r * r;
  }
  for (const auto& pair : batch) {
    const std::size_t k = index(pair.first, pair.second);
    if (counts_[k] == 0) means_[k] = 0.0;
    ++counts_[k];
    const auto denom = cap_ > 0 ? std::min(counts_[k], cap_) : counts_[k];
    means_[k] += (pair.gap - means_[k]) / static_cast<double>(denom);
  }
  return batch.empty() ? 0.0 : loss / static_cast<double>(batch.size());
}

void TabularDistance::td_update(StateId from, StateId to, double target, double rate) {
  const std::size_t k = index(from, to);
  ++counts_[k];
  means_[k] += rate * (target - means_[k]);
}

void TabularDistance::save(std::ostream& out) const {
  out << "s,s_prime,mean,count\n";
  out << std::setprecision(17);
  for (StateId s = 0; s < n_; ++s) {
    for (StateId t = 0; t < n_; ++t) {
      const std::size_t k = index(s, t);
      if (counts_[k] > 0) out << s << ',' << t << ',' << means_[k] << ',' << counts_[k] << '\n';
    }
  }
}

TabularDistance TabularDistance::load(std::istream& in, int state_count, double d_max) {
  TabularDistance model(state_count, d_max);
  std::string line;
  if (!std::getline(in, line) || line != "s,s_prime,mean,count") {
    throw ContractViolation("tabular distance checkpoint: bad header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    StateId s = 0, t = 0;
    double mean = 0.0;
    std::int64_t count = 0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> s >> c1 >> t >> c2 >> mean >> c3 >> count) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw ContractViolation("tabular distance checkpoint: malformed row '" + line + "'");
    }
    const std::size_t k = model.index(s, t);
    model.means_[k] = mean;
    model.counts_[k] = count;
  }
  return model;
}

std::unique_ptr<DistanceModel> TabularDistance::clone() const {
  return std::make_unique<TabularDistance>(*this);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<int> layer_sizes(std::size_t feature_dim, const std::vector<int>& hidden) {
  std::vector<int> sizes{static_cast<int>(2 * feature_dim)};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return sizes;
}

std::vector<std::vector<double>> all_features(const Environment& env) {
  std::vector<std::vector<double>> f;
  for (StateId s : enumerate_states(env)) f.push_back(env.features(s));
  return f;
}

Mlp make_net(std::size_t feature_dim, const std::vector<int>& hidden, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x4d4c50);
  return Mlp(layer_sizes(feature_dim, hidden), rng);
}

}  // namespace

ParametricDistance::ParametricDistance(const Environment& env, double d_max, double learning_rate,
                                       std::vector<int> hidden, std::uint64_t seed)
    : features_(all_features(env)), d_max_(d_max),
      net_(make_net(features_.front().size(), hidden, seed)),
      optimizer_(net_.parameter_count(), learning_rate) {
  if (!(d_max > 0.0)) throw ContractViolation("d_max must be positive");
}

Eigen::VectorXd ParametricDistance::encode(StateId from, StateId to) const {
  const auto n = static_cast<StateId>(features_.size());
  if (from < 0 || from >= n || to < 0 || to >= n) throw ContractViolation("distance query for invalid state pair");
  const auto& a = features_[static_cast<std::size_t>(from)];
  const auto& b = features_[static_cast<std::size_t>(to)];
  Eigen::VectorXd x(static_cast<Eigen::Index>(a.size() + b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) x(static_cast<Eigen::Index>(i)) = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) x(static_cast<Eigen::Index>(a.size() + i)) = b[i];
  return x;
}

Eigen::MatrixXd ParametricDistance::encode(std::span<const PairSample> batch) const {
  const auto dim = static_cast<Eigen::Index>(2 * features_.front().size());
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) x.col(static_cast<Eigen::Index>(b)) = encode(batch[b].first, batch[b].second);
  return x;
}

double ParametricDistance::predict(StateId from, StateId to) const { return net_.forward(encode(from, to)); }

double ParametricDistance::update(std::span<const PairSample> batch) {
  if (batch.empty()) return 0.0;
  const Eigen::MatrixXd x = encode(batch);
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) y(static_cast<Eigen::Index>(b)) = batch[b].gap;
  Eigen::VectorXd grad;
  const double loss = net_.loss_and_gradient(x, y, grad);
  Eigen::VectorXd params = net_.parameters();
  optimizer_.step(params, grad);
  net_.set_parameters(params);
  return loss;
}

void ParametricDistance::save(std::ostream& out) const {
  out << "ddl-parametric-distance v1\nlayers";
  for (int s : net_.layer_sizes()) out << ' ' << s;
  out << "\nd_max " << std::setprecision(17) << d_max_ << '\n';
  const Eigen::VectorXd p = net_.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) out << p(i) << '\n';
}

void ParametricDistance::load_parameters(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "ddl-parametric-distance v1") {
    throw ContractViolation("parametric distance checkpoint: bad header");
  }
  std::getline(in, line);
  std::istringstream layers(line);
  std::string tag;
  layers >> tag;
  std::vector<int> sizes;
  for (int s; layers >> s;) sizes.push_back(s);
  if (tag != "layers" || sizes != net_.layer_sizes()) {
    throw ContractViolation("parametric distance checkpoint: layer sizes do not match");
  }
  std::getline(in, line);
  Eigen::VectorXd p(net_.parameter_count());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(in >> p(i))) throw ContractViolation("parametric distance checkpoint: truncated parameters");
  }
  net_.set_parameters(p);
}

std::unique_ptr<DistanceModel> ParametricDistance::clone() const {
  return std::make_unique<ParametricDistance>(*this);
}

// ---------------------------------------------------------------------------

FitStats fit(DistanceModel& model, const TrajectoryPool& pool, int steps, int batch_size, Rng& rng) {
  if (pool.empty()) throw ContractViolation("fit: pool is empty");
  FitStats stats;
  for (int k = 0; k < steps; ++k) {
    const auto batch = sample_pairs(pool, batch_size, rng);
    stats.step_losses.push_back(model.update(batch));
  }
  return stats;
}

FitStats td_fit(TabularDistance& model, const TrajectoryPool& pool, StateId goal, int steps,
                int batch_size, double learning_rate, double td_gamma, Rng& rng) {
  if (pool.empty()) throw ContractViolation("td_fit: pool is empty");
  if (goal < 0 || goal >= model.state_count()) throw ContractViolation("td_fit: invalid goal");
  if (batch_size < 1) throw ContractViolation("td_fit: batch size must be positive");
  const auto& trajectories = pool.trajectories();
  const auto value = [&](StateId s) { return s == goal ? 0.0 : model.predict(s, goal); };

  FitStats stats;
  for (int k = 0; k < steps; ++k) {
    double loss = 0.0;
    int used = 0;
    for (int b = 0; b < batch_size; ++b) {
      const auto& t = trajectories[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<std::int64_t>(trajectories.size()) - 1))];
      if (t.length() == 0) continue;
      const auto i = static_cast<std::size_t>(uniform_int(rng, 0, t.length() - 1));
      const StateId s = t.states[i];
      const StateId next = t.states[i + 1];
      const double target = s == goal ? 0.0 : std::min(model.d_max(), 1.0 + td_gamma * value(next));
      const double r = value(s) - target;
      loss += 0.5 * r * r;
      ++used;
      model.td_update(s, goal, target, learning_rate);
    }
    stats.step_losses.push_back(used > 0 ? loss / used : 0.0);
  }
  return stats;
}

}  // namespace ddl
