#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ddl/common.hpp"

namespace ddl {

/// Fully connected regressor with tanh hidden layers and a softplus output,
/// so predictions are never negative.
class Mlp {
 public:
  /// `layer_sizes` = {inputs, hidden..., 1}.
  Mlp(std::vector<int> layer_sizes, Rng& rng);

  double forward(const Eigen::VectorXd& input) const;

  /// Mean of 0.5 * (f(x_b) - y_b)^2 over the batch; inputs are columns.
  double loss(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets) const;

  /// Same loss, with its gradient w.r.t. parameters() written to `gradient`.
  double loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                           Eigen::VectorXd& gradient) const;

  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);
  Eigen::Index parameter_count() const;
  const std::vector<int>& layer_sizes() const { return sizes_; }

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> weights_;  // weights_[l] is sizes_[l+1] x sizes_[l]
  std::vector<Eigen::VectorXd> biases_;
};

/// Adam with TensorFlow's default moment parameters.
class Adam {
 public:
  Adam(Eigen::Index size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-7);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient);
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

}  // namespace ddl
