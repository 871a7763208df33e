#include <gtest/gtest.h>

#include "dedqn/neural.hpp"
#include "support/gradcheck.hpp"

using namespace dedqn;

namespace {

Eigen::VectorXd random_state(std::size_t n, Rng& rng) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(n));
  for (Eigen::Index k = 0; k < s.size(); ++k) s[k] = rng.uniform();
  return s;
}

Eigen::VectorXd fwd(const QNetwork& net, const Eigen::VectorXd& s) {
  return net.forward(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
}

}  // namespace

TEST(Network, DefaultShape) {
  const auto net = init_network(default_layer_sizes(), 1);
  EXPECT_EQ(net.sizes(), (std::vector<std::size_t>{99, 100, 100, 100, 100, 4}));
  EXPECT_EQ(net.parameter_count(), 99u * 100 + 100 + 3 * (100 * 100 + 100) + 100 * 4 + 4);
}

TEST(Network, InitDeterministicFiniteAndBounded) {
  const auto a = init_network(default_layer_sizes(), 5);
  const auto b = init_network(default_layer_sizes(), 5);
  const auto c = init_network(default_layer_sizes(), 6);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(a.sizes()[l] + a.sizes()[l + 1]));
    EXPECT_LE(a.layer(l).weights.cwiseAbs().maxCoeff(), bound);
    EXPECT_GT(a.layer(l).weights.cwiseAbs().maxCoeff(), 0.9 * bound);
    EXPECT_EQ(a.layer(l).bias.cwiseAbs().maxCoeff(), 0.0);
  }
  Rng rng(1);
  const auto q = fwd(a, random_state(99, rng));
  ASSERT_EQ(q.size(), 4);
  EXPECT_TRUE(q.allFinite());
}

TEST(Network, ZeroNetworkGivesZero) {
  QNetwork net(default_layer_sizes());
  Rng rng(2);
  EXPECT_EQ(fwd(net, random_state(99, rng)), Eigen::VectorXd::Zero(4));
}

TEST(Network, HandComputedToyNet) {
  QNetwork net({2, 2, 2});
  net.layer(0).weights << 1.0, -1.0, 0.5, 2.0;
  net.layer(0).bias << 0.0, -1.0;
  net.layer(1).weights << 1.0, 1.0, -2.0, 3.0;
  net.layer(1).bias << 0.5, 0.0;
  Eigen::Vector2d x(1.0, 2.0);
  // hidden: relu(1 - 2 + 0) = 0, relu(0.5 + 4 - 1) = 3.5
  // out: 0 + 3.5 + 0.5 = 4, 0 + 10.5 = 10.5
  const auto q = fwd(net, x);
  EXPECT_DOUBLE_EQ(q[0], 4.0);
  EXPECT_DOUBLE_EQ(q[1], 10.5);
}

TEST(Network, OutputLayerIsLinear) {
  auto net = init_network(default_layer_sizes(), 3);
  Rng rng(3);
  const auto s = random_state(99, rng);
  const auto q = fwd(net, s);
  net.layer(net.num_layers() - 1).weights *= 3.0;
  EXPECT_TRUE(fwd(net, s).isApprox(3.0 * q, 1e-14));
}

TEST(Network, RejectsBadInput) {
  const auto net = init_network(default_layer_sizes(), 3);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(99);
  s[5] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(fwd(net, s), std::invalid_argument);
  EXPECT_THROW(fwd(net, Eigen::VectorXd::Zero(98)), std::invalid_argument);
}

TEST(Training, FittedBatchHasZeroLossAndGradient) {
  auto net = init_network({5, 4, 3}, 1);
  Rng rng(4);
  Batch b;
  b.states.resize(5, 8);
  for (int j = 0; j < 8; ++j) {
    b.states.col(j) = random_state(5, rng);
    b.actions.push_back(rng.below(3));
  }
  const Eigen::MatrixXd q = net.forward_batch(b.states);
  for (int j = 0; j < 8; ++j) b.targets.push_back(q(static_cast<Eigen::Index>(b.actions[j]), j));
  auto adam = AdamState::for_network(net);
  const auto before = net.fingerprint();
  EXPECT_EQ(train_step(net, adam, b), 0.0);
  EXPECT_EQ(net.fingerprint(), before);
  EXPECT_EQ(adam.step, 1u);
}

TEST(Training, FirstAdamStepMovesByLearningRate) {
  QNetwork net({1, 1});
  net.layer(0).weights(0, 0) = 0.3;
  Batch b;
  b.states.resize(1, 1);
  b.states(0, 0) = 1.0;
  b.actions = {0};
  b.targets = {2.0};  // gradient on w is negative: w increases
  auto adam = AdamState::for_network(net);
  train_step(net, adam, b);
  const double dw = net.layer(0).weights(0, 0) - 0.3;
  EXPECT_GT(dw, 0.0);
  EXPECT_NEAR(std::fabs(dw), 1e-4, 1e-10);
}

TEST(Training, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (const auto& sizes : {std::vector<std::size_t>{2, 2, 2}, std::vector<std::size_t>{5, 4, 4, 2}}) {
    for (int trial = 0; trial < 20; ++trial) {
      auto net = init_network(sizes, derive_seed(9, trial));
      for (auto& L : net.layers()) L.bias.setConstant(0.1);
      const auto batch = gradcheck::random_batch(net, 6, rng);
      const auto res = gradcheck::check(net, batch);
      EXPECT_LT(res.max_rel_error, 1e-4) << "trial " << trial;
    }
  }
}

TEST(Training, OnlySelectedOutputReceivesGradient) {
  auto net = init_network({4, 6, 3}, 2);
  Rng rng(6);
  Batch b;
  b.states.resize(4, 5);
  for (int j = 0; j < 5; ++j) {
    b.states.col(j) = random_state(4, rng);
    b.actions.push_back(1);
    b.targets.push_back(5.0);
  }
  const auto g = loss_gradients(net, b);
  const auto& last = g.layers.back();
  EXPECT_EQ(last.weights.row(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(last.weights.row(2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(last.bias[0], 0.0);
  EXPECT_EQ(last.bias[2], 0.0);
  EXPECT_GT(last.weights.row(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Training, RejectsBadBatches) {
  auto net = init_network({3, 2}, 1);
  auto adam = AdamState::for_network(net);
  Batch empty;
  empty.states.resize(3, 0);
  EXPECT_THROW(train_step(net, adam, empty), std::invalid_argument);
  Batch b;
  b.states = Eigen::MatrixXd::Zero(3, 1);
  b.actions = {0};
  b.targets = {std::numeric_limits<double>::infinity()};
  EXPECT_THROW(train_step(net, adam, b), std::invalid_argument);
  b.targets = {1.0};
  b.actions = {2};
  EXPECT_THROW(train_step(net, adam, b), std::invalid_argument);
}

TEST(Training, DeterministicUnderFixedStream) {
  auto run = [] {
    auto net = init_network({6, 8, 8, 3}, 11);
    auto adam = AdamState::for_network(net);
    Rng rng(12);
    for (int k = 0; k < 50; ++k) {
      Batch b;
      b.states.resize(6, 4);
      for (int j = 0; j < 4; ++j) {
        b.states.col(j) = random_state(6, rng);
        b.actions.push_back(rng.below(3));
        b.targets.push_back(rng.uniform(0, 10));
      }
      train_step(net, adam, b);
    }
    return net.fingerprint();
  };
  EXPECT_EQ(run(), run());
}

TEST(Training, ClippingBoundsTheGradientNorm) {
  auto net = init_network({3, 4, 2}, 1);
  Batch b;
  b.states = Eigen::MatrixXd::Ones(3, 2);
  b.actions = {0, 1};
  b.targets = {1e4, -1e4};
  auto g = loss_gradients(net, b);
  clip_gradients(g, 1.0);
  double sq = 0.0;
  for (const auto& L : g.layers) sq += L.weights.squaredNorm() + L.bias.squaredNorm();
  EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
}

TEST(CopyWeights, BitEqualAndDecoupled) {
  auto src = init_network({5, 7, 3}, 1);
  auto dst = init_network({5, 7, 3}, 2);
  copy_weights(src, dst);
  EXPECT_EQ(src.fingerprint(), dst.fingerprint());
  Rng rng(7);
  for (int k = 0; k < 10; ++k) {
    const auto s = random_state(5, rng);
    EXPECT_EQ(fwd(src, s), fwd(dst, s));
  }
  const auto frozen = dst.fingerprint();
  copy_weights(src, dst);
  EXPECT_EQ(dst.fingerprint(), frozen);

  auto adam = AdamState::for_network(src);
  Batch b;
  b.states = Eigen::MatrixXd::Ones(5, 1);
  b.actions = {0};
  b.targets = {3.0};
  train_step(src, adam, b);
  EXPECT_NE(src.fingerprint(), frozen);
  EXPECT_EQ(dst.fingerprint(), frozen);

  QNetwork other({5, 6, 3});
  EXPECT_THROW(copy_weights(src, other), std::invalid_argument);
}
