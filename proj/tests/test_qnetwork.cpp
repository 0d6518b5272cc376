#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fallback/qnetwork.hpp"

using namespace fallback;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Straight-line reference forward pass with plain loops.
std::vector<double> reference_forward(const QNetwork& net, std::vector<double> x) {
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& W = layers[l].weight;
    std::vector<double> y(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double acc = layers[l].bias(r);
      for (Eigen::Index c = 0; c < W.cols(); ++c) acc += W(r, c) * x[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(r)] = (l + 1 < layers.size()) ? std::max(0.0, acc) : acc;
    }
    x = std::move(y);
  }
  return x;
}

double objective(const QNetwork& net, const std::vector<double>& x, const std::vector<double>& g) {
  const Eigen::VectorXd out = net.forward(x);
  double s = 0.0;
  for (Eigen::Index i = 0; i < out.size(); ++i) s += out(i) * g[static_cast<std::size_t>(i)];
  return s;
}

}  // namespace

TEST(QNetwork, ZeroConstructedAndInitializedBounds) {
  const QNetwork zero({8, 64, 64, 6});
  EXPECT_EQ(zero.parameter_count(), 8u * 64 + 64 + 64 * 64 + 64 + 64 * 6 + 6);
  const Eigen::VectorXd q = zero.forward(std::vector<double>(8, 0.5));
  EXPECT_EQ(q.size(), 6);
  EXPECT_EQ(q.norm(), 0.0);

  Rng rng(3);
  const QNetwork net = QNetwork::initialized({8, 64, 64, 6}, rng);
  for (const auto& layer : net.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    EXPECT_LE(layer.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(layer.bias.cwiseAbs().maxCoeff(), bound);
  }
  EXPECT_THROW(QNetwork({8}), std::invalid_argument);
  EXPECT_THROW(QNetwork({8, 0, 6}), std::invalid_argument);
}

TEST(QNetwork, ForwardMatchesStraightLineReference) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const QNetwork net = QNetwork::initialized({8, 16, 12, 6}, rng);
    const auto x = random_vector(rng, 8);
    const Eigen::VectorXd got = net.forward(x);
    const auto want = reference_forward(net, x);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got(static_cast<Eigen::Index>(i)), want[i], 1e-12);
  }
}

TEST(QNetwork, BatchForwardMatchesColumnwise) {
  Rng rng(4);
  const QNetwork net = QNetwork::initialized({8, 64, 64, 6}, rng);
  std::vector<StateVector> states(10);
  for (auto& s : states) {
    const auto v = random_vector(rng, 8);
    std::copy(v.begin(), v.end(), s.begin());
  }
  const Eigen::MatrixXd out = net.forward_batch(stack_states(states));
  for (std::size_t j = 0; j < states.size(); ++j) {
    const Eigen::VectorXd single = net.forward(states[j]);
    EXPECT_LT((out.col(static_cast<Eigen::Index>(j)) - single).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(QNetwork, ForwardRejectsBadInput) {
  const QNetwork net({8, 4, 6});
  EXPECT_THROW(net.forward(std::vector<double>(7, 0.0)), std::invalid_argument);
  std::vector<double> x(8, 0.0);
  x[2] = std::nan("");
  EXPECT_THROW(net.forward(x), std::invalid_argument);
}

TEST(QNetwork, BackpropMatchesCentralDifferences) {
  // 20 random nets; relative error of the full gradient vector <= 1e-4.
  Rng rng(2024);
  std::uniform_int_distribution<int> width(3, 16);
  for (int trial = 0; trial < 20; ++trial) {
    QNetwork net = QNetwork::initialized({8, width(rng), width(rng), 6}, rng);
    const auto x = random_vector(rng, 8);
    const auto g = random_vector(rng, 6);
    const Gradients grads = net.backward(x, g);

    const double h = 1e-6;
    double diff2 = 0.0, norm_a = 0.0, norm_b = 0.0;
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = objective(net, x, g);
      param = saved - h;
      const double down = objective(net, x, g);
      param = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff2 += (analytic - numeric) * (analytic - numeric);
      norm_a += analytic * analytic;
      norm_b += numeric * numeric;
    };
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      auto& layer = net.layers()[l];
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) check(layer.weight(r, c), grads.weight[l](r, c));
        check(layer.bias(r), grads.bias[l](r));
      }
    }
    const double rel = std::sqrt(diff2) / (std::sqrt(norm_a) + std::sqrt(norm_b) + 1e-12);
    EXPECT_LE(rel, 1e-4) << "net " << trial;
  }
}

TEST(QNetwork, BatchBackwardIsSumOfSingles) {
  Rng rng(8);
  const QNetwork net = QNetwork::initialized({8, 10, 10, 6}, rng);
  Eigen::MatrixXd X(8, 5), G(6, 5);
  for (Eigen::Index j = 0; j < 5; ++j) {
    const auto x = random_vector(rng, 8);
    const auto g = random_vector(rng, 6);
    for (int i = 0; i < 8; ++i) X(i, j) = x[static_cast<std::size_t>(i)];
    for (int i = 0; i < 6; ++i) G(i, j) = g[static_cast<std::size_t>(i)];
  }
  const Gradients batch = net.backward(net.forward_cached(X), G);
  Gradients sum = net.zero_gradients();
  for (Eigen::Index j = 0; j < 5; ++j) {
    const Eigen::VectorXd x = X.col(j), g = G.col(j);
    const Gradients one = net.backward(std::span<const double>(x.data(), 8), std::span<const double>(g.data(), 6));
    for (std::size_t l = 0; l < sum.weight.size(); ++l) {
      sum.weight[l] += one.weight[l];
      sum.bias[l] += one.bias[l];
    }
  }
  for (std::size_t l = 0; l < sum.weight.size(); ++l) {
    EXPECT_LT((batch.weight[l] - sum.weight[l]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((batch.bias[l] - sum.bias[l]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  // After one step the bias-corrected moments are g and g^2, so each
  // parameter moves by -lr * g / (|g| + eps).
  Rng rng(1);
  QNetwork net = QNetwork::initialized({3, 4, 2}, rng);
  const QNetwork before = net;
  Gradients g = net.zero_gradients();
  for (auto& w : g.weight) w.setConstant(0.5);
  for (auto& b : g.bias) b.setConstant(-2.0);
  AdamConfig cfg;
  AdamOptimizer opt(net, cfg);
  opt.apply(net, g);
  EXPECT_EQ(opt.step_count(), 1);
  const double dw = -cfg.learning_rate * 0.5 / (0.5 + cfg.epsilon);
  const double db = cfg.learning_rate * 2.0 / (2.0 + cfg.epsilon);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const Eigen::MatrixXd wd = net.layers()[l].weight - before.layers()[l].weight;
    const Eigen::VectorXd bd = net.layers()[l].bias - before.layers()[l].bias;
    EXPECT_NEAR(wd.maxCoeff(), dw, 1e-15);
    EXPECT_NEAR(wd.minCoeff(), dw, 1e-15);
    EXPECT_NEAR(bd.maxCoeff(), db, 1e-15);
  }
}

TEST(Adam, SecondStepMatchesScalarRecurrence) {
  QNetwork net({1, 1});
  AdamConfig cfg;
  AdamOptimizer opt(net, cfg);
  Gradients g = net.zero_gradients();
  double m = 0.0, v = 0.0, theta = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const double grad = 0.3 * t - 1.0;
    g.weight[0](0, 0) = grad;
    opt.apply(net, g);
    m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad;
    const double mhat = m / (1 - std::pow(cfg.beta1, t));
    const double vhat = v / (1 - std::pow(cfg.beta2, t));
    theta -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    EXPECT_NEAR(net.layers()[0].weight(0, 0), theta, 1e-15);
  }
}

TEST(QNetwork, ChecksumTracksParameters) {
  Rng a(5), b(5), c(6);
  const QNetwork n1 = QNetwork::initialized({8, 8, 6}, a);
  const QNetwork n2 = QNetwork::initialized({8, 8, 6}, b);
  const QNetwork n3 = QNetwork::initialized({8, 8, 6}, c);
  EXPECT_TRUE(n1 == n2);
  EXPECT_EQ(n1.checksum(), n2.checksum());
  EXPECT_FALSE(n1 == n3);
  EXPECT_NE(n1.checksum(), n3.checksum());
  EXPECT_TRUE(n1.all_finite());
}
