#include "fallback/qnetwork.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace fallback {

namespace {

void check_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("a network needs at least two layer sizes");
  for (int s : sizes) {
    if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
  }
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

QNetwork::QNetwork(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  check_sizes(sizes_);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    layers_.push_back({Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]),
                       Eigen::VectorXd::Zero(sizes_[l + 1])});
  }
}

QNetwork QNetwork::initialized(std::vector<int> layer_sizes, Rng& rng) {
  QNetwork net(std::move(layer_sizes));
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    // Fill row-major so the draw order matches the checkpoint layout.
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = dist(rng);
  }
  return net;
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

Eigen::VectorXd QNetwork::forward(std::span<const double> input) const {
  if (input.size() != input_size()) {
    throw std::invalid_argument("network input has " + std::to_string(input.size()) +
                                " components, expected " + std::to_string(input_size()));
  }
  Eigen::MatrixXd x(input.size(), 1);
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (!std::isfinite(input[i])) throw std::invalid_argument("non-finite network input");
    x(static_cast<Eigen::Index>(i), 0) = input[i];
  }
  return forward_batch(x).col(0);
}

Eigen::MatrixXd QNetwork::forward_batch(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd x = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * x;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    x = std::move(z);
  }
  return x;
}

ForwardCache QNetwork::forward_cached(const Eigen::MatrixXd& inputs) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_size()) {
    throw std::invalid_argument("batch rows do not match the network input size");
  }
  ForwardCache cache;
  cache.inputs.reserve(layers_.size());
  Eigen::MatrixXd x = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    cache.inputs.push_back(x);
    Eigen::MatrixXd z = layers_[l].weight * x;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    x = std::move(z);
  }
  cache.output = std::move(x);
  return cache;
}

Gradients QNetwork::backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_out) const {
  if (grad_out.rows() != cache.output.rows() || grad_out.cols() != cache.output.cols()) {
    throw std::invalid_argument("output gradient shape does not match the forward pass");
  }
  Gradients g = zero_gradients();
  Eigen::MatrixXd delta = grad_out;  // d/d(pre-activation) of the current layer
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Eigen::MatrixXd& in = cache.inputs[l];
    g.weight[l].noalias() = delta * in.transpose();
    g.bias[l] = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream = layers_[l].weight.transpose() * delta;
    // in = relu(z) of the previous layer, so relu'(z) = [in > 0].
    delta = upstream.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
  }
  return g;
}

Gradients QNetwork::backward(std::span<const double> input, std::span<const double> grad_out) const {
  if (grad_out.size() != output_size()) {
    throw std::invalid_argument("output gradient has the wrong length");
  }
  Eigen::MatrixXd x(input.size(), 1);
  for (std::size_t i = 0; i < input.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = input[i];
  Eigen::MatrixXd go(grad_out.size(), 1);
  for (std::size_t i = 0; i < grad_out.size(); ++i) go(static_cast<Eigen::Index>(i), 0) = grad_out[i];
  return backward(forward_cached(x), go);
}

Gradients QNetwork::zero_gradients() const {
  Gradients g;
  for (const auto& layer : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  return g;
}

bool QNetwork::all_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

std::uint64_t QNetwork::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& layer : layers_) {
    h = fnv1a(layer.weight.data(), sizeof(double) * static_cast<std::size_t>(layer.weight.size()), h);
    h = fnv1a(layer.bias.data(), sizeof(double) * static_cast<std::size_t>(layer.bias.size()), h);
  }
  return h;
}

bool operator==(const QNetwork& a, const QNetwork& b) {
  if (a.sizes_ != b.sizes_) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

AdamOptimizer::AdamOptimizer(const QNetwork& net, AdamConfig cfg)
    : cfg_(cfg), first_(net.zero_gradients()), second_(net.zero_gradients()) {}

void AdamOptimizer::apply(QNetwork& net, const Gradients& grads) {
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    param.array() -= cfg_.learning_rate * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + cfg_.epsilon);
  };
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads.weight[l], first_.weight[l], second_.weight[l]);
    update(layers[l].bias, grads.bias[l], first_.bias[l], second_.bias[l]);
  }
}

Eigen::MatrixXd stack_states(std::span<const StateVector> states) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(kStateDim), static_cast<Eigen::Index>(states.size()));
  for (std::size_t j = 0; j < states.size(); ++j) {
    for (std::size_t i = 0; i < kStateDim; ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = states[j][i];
    }
  }
  return m;
}

}  // namespace fallback
