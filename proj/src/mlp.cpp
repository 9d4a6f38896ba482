#include "ddl/mlp.hpp"

#include <cmath>

namespace ddl {

namespace {

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Box-Muller on our own uniform stream so weights do not depend on the
// standard library's normal_distribution.
double normal(Rng& rng) {
  const double u1 = 1.0 - uniform_real(rng);
  const double u2 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes, Rng& rng) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2 || sizes_.back() != 1) {
    throw ContractViolation("layer sizes must have at least an input and a scalar output");
  }
  for (int s : sizes_) {
    if (s < 1) throw ContractViolation("layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    // Glorot-normal scale.
    const double scale = std::sqrt(2.0 / (in + out));
    Eigen::MatrixXd w(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * normal(rng);
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(out));
  }
}

double Mlp::forward(const Eigen::VectorXd& input) const {
  Eigen::VectorXd a = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::VectorXd z = weights_[l] * a + biases_[l];
    if (l + 1 < weights_.size()) a = z.array().tanh();
    else return softplus(z(0));
  }
  return 0.0;
}

double Mlp::loss(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets) const {
  double total = 0.0;
  for (Eigen::Index b = 0; b < inputs.cols(); ++b) {
    const double r = forward(inputs.col(b)) - targets(b);
    total += 0.5 * r * r;
  }
  return total / static_cast<double>(inputs.cols());
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                              Eigen::VectorXd& gradient) const {
  const std::size_t layers = weights_.size();
  const auto batch = static_cast<double>(inputs.cols());

  std::vector<Eigen::MatrixXd> activations{inputs};
  Eigen::MatrixXd z;
  for (std::size_t l = 0; l < layers; ++l) {
    z = (weights_[l] * activations.back()).colwise() + biases_[l];
    if (l + 1 < layers) activations.push_back(z.array().tanh().matrix());
  }
  // z is now the 1 x B output pre-activation.
  Eigen::RowVectorXd out(z.cols());
  Eigen::RowVectorXd dout(z.cols());
  double total = 0.0;
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    out(b) = softplus(z(0, b));
    const double r = out(b) - targets(b);
    total += 0.5 * r * r;
    dout(b) = r * sigmoid(z(0, b)) / batch;
  }

  std::vector<Eigen::MatrixXd> grad_w(layers);
  std::vector<Eigen::VectorXd> grad_b(layers);
  Eigen::MatrixXd delta = dout;
  for (std::size_t l = layers; l-- > 0;) {
    grad_w[l] = delta * activations[l].transpose();
    grad_b[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = weights_[l].transpose() * delta;
      delta = back.array() * (1.0 - activations[l].array().square());
    }
  }

  gradient.resize(parameter_count());
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    gradient.segment(offset, grad_w[l].size()) = Eigen::Map<const Eigen::VectorXd>(grad_w[l].data(), grad_w[l].size());
    offset += grad_w[l].size();
    gradient.segment(offset, grad_b[l].size()) = grad_b[l];
    offset += grad_b[l].size();
  }
  return total / batch;
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    flat.segment(offset, weights_[l].size()) = Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), weights_[l].size());
    offset += weights_[l].size();
    flat.segment(offset, biases_[l].size()) = biases_[l];
    offset += biases_[l].size();
  }
  return flat;
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw ContractViolation("parameter vector has the wrong size");
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::Map<Eigen::VectorXd>(weights_[l].data(), weights_[l].size()) = flat.segment(offset, weights_[l].size());
    offset += weights_[l].size();
    biases_[l] = flat.segment(offset, biases_[l].size());
    offset += biases_[l].size();
  }
}

Adam::Adam(Eigen::Index size, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon),
      m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {
  if (!(learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * gradient;
  v_ = beta2_ * v_ + (1.0 - beta2_) * gradient.cwiseProduct(gradient);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace ddl
