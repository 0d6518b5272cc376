#pragma once

// Fully connected Q-network with rectifier hidden layers and a linear head,
// hand-written reverse-mode gradients and an Adam optimizer.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fallback/mdp.hpp"

namespace fallback {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

// Activations kept from a batched forward pass; column j is sample j.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  Eigen::MatrixXd output;
};

class QNetwork {
 public:
  QNetwork() = default;
  // All parameters zero.
  explicit QNetwork(std::vector<int> layer_sizes);
  // Uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static QNetwork initialized(std::vector<int> layer_sizes, Rng& rng);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  std::size_t input_size() const { return static_cast<std::size_t>(sizes_.front()); }
  std::size_t output_size() const { return static_cast<std::size_t>(sizes_.back()); }
  std::size_t parameter_count() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Throws std::invalid_argument on non-finite or wrongly sized input.
  Eigen::VectorXd forward(std::span<const double> input) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;
  ForwardCache forward_cached(const Eigen::MatrixXd& inputs) const;

  // Gradient of sum_j <output_j, grad_out_j> with respect to every parameter.
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_out) const;
  Gradients backward(std::span<const double> input, std::span<const double> grad_out) const;

  Gradients zero_gradients() const;
  bool all_finite() const;
  // FNV-1a over the raw parameter bytes; equal nets give equal checksums.
  std::uint64_t checksum() const;

  friend bool operator==(const QNetwork& a, const QNetwork& b);

 private:
  std::vector<int> sizes_;
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(const QNetwork& net, AdamConfig cfg);

  void apply(QNetwork& net, const Gradients& grads);
  std::int64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  Gradients first_;
  Gradients second_;
  std::int64_t steps_ = 0;
};

Eigen::MatrixXd stack_states(std::span<const StateVector> states);

}  // namespace fallback
