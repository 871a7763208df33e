#pragma once

// Dense ReLU network with a linear output layer, trained on the squared
// error of one selected output per sample, with Adam updates.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dedqn/rng.hpp"

namespace dedqn {

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

/// Layer sizes of the default Q-network: 99 -> 4 x 100 -> 4.
inline std::vector<std::size_t> default_layer_sizes(std::size_t inputs = 99, std::size_t hidden_layers = 4,
                                                    std::size_t hidden_units = 100, std::size_t outputs = 4) {
  std::vector<std::size_t> s{inputs};
  for (std::size_t k = 0; k < hidden_layers; ++k) s.push_back(hidden_units);
  s.push_back(outputs);
  return s;
}

class QNetwork {
 public:
  QNetwork() = default;

  /// Zero weights and biases.
  explicit QNetwork(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("network needs at least an input and an output layer");
    for (auto s : sizes_)
      if (s == 0) throw std::invalid_argument("layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(sizes_[l]);
      const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
      layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    }
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t inputs() const { return sizes_.front(); }
  std::size_t outputs() const { return sizes_.back(); }
  std::size_t num_layers() const { return layers_.size(); }
  DenseLayer& layer(std::size_t l) { return layers_.at(l); }
  const DenseLayer& layer(std::size_t l) const { return layers_.at(l); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& L : layers_) n += static_cast<std::size_t>(L.weights.size() + L.bias.size());
    return n;
  }

  /// Forward pass on a batch stored column-wise (inputs x B). Returns outputs x B.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const {
    if (x.rows() != static_cast<Eigen::Index>(inputs()))
      throw std::invalid_argument("forward: expected " + std::to_string(inputs()) + " inputs, got " +
                                  std::to_string(x.rows()));
    if (!x.allFinite()) throw std::invalid_argument("forward: non-finite input");
    Eigen::MatrixXd a, z;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (l == 0)
        z.noalias() = layers_[l].weights * x;
      else
        z.noalias() = layers_[l].weights * a;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) {
        a = z.cwiseMax(0.0);
      } else {
        a.swap(z);
      }
    }
    return a;
  }

  Eigen::VectorXd forward(std::span<const double> x) const {
    Eigen::Map<const Eigen::MatrixXd> m(x.data(), static_cast<Eigen::Index>(x.size()), 1);
    return forward_batch(m);
  }

  /// Hash of every parameter's bit pattern.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](const double* p, Eigen::Index n) {
      for (Eigen::Index k = 0; k < n; ++k) {
        std::uint64_t bits;
        std::memcpy(&bits, p + k, sizeof bits);
        h = splitmix64(h ^ bits);
      }
    };
    for (const auto& L : layers_) {
      mix(L.weights.data(), L.weights.size());
      mix(L.bias.data(), L.bias.size());
    }
    return h;
  }

  bool same_shape(const QNetwork& other) const { return sizes_ == other.sizes_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<DenseLayer> layers_;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline double init_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline QNetwork init_network(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  QNetwork net(sizes);
  Rng rng(seed);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto& w = net.layer(l).weights;
    const double bound = init_bound(sizes[l], sizes[l + 1]);
    // Row-major fill so the draw order does not depend on Eigen's storage.
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
  }
  return net;
}

/// dst <- src, bit for bit.
inline void copy_weights(const QNetwork& src, QNetwork& dst) {
  if (!src.same_shape(dst)) throw std::invalid_argument("copy_weights: architecture mismatch");
  for (std::size_t l = 0; l < src.num_layers(); ++l) {
    dst.layer(l).weights = src.layer(l).weights;
    dst.layer(l).bias = src.layer(l).bias;
  }
}

/// Training batch: states column-wise, one selected output and target per column.
struct Batch {
  Eigen::MatrixXd states;  // inputs x B
  std::vector<std::size_t> actions;
  std::vector<double> targets;

  std::size_t size() const { return actions.size(); }

  void validate(const QNetwork& net) const {
    if (actions.empty()) throw std::invalid_argument("batch must not be empty");
    if (targets.size() != actions.size() || states.cols() != static_cast<Eigen::Index>(actions.size()))
      throw std::invalid_argument("batch: inconsistent sizes");
    for (auto a : actions)
      if (a >= net.outputs()) throw std::invalid_argument("batch: action index out of range");
    for (double t : targets)
      if (!std::isfinite(t)) throw std::invalid_argument("batch: non-finite target");
  }
};

/// Same shape as the network; used for gradients and Adam moments.
struct ParameterSet {
  std::vector<DenseLayer> layers;

  static ParameterSet zeros_like(const QNetwork& net) {
    ParameterSet p;
    for (const auto& L : net.layers())
      p.layers.push_back({Eigen::MatrixXd::Zero(L.weights.rows(), L.weights.cols()),
                          Eigen::VectorXd::Zero(L.bias.size())});
    return p;
  }
};

/// Mean over the batch of (target - Q(s, a))^2.
inline double batch_loss(const QNetwork& net, const Batch& batch) {
  batch.validate(net);
  const Eigen::MatrixXd q = net.forward_batch(batch.states);
  double loss = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const double e = q(static_cast<Eigen::Index>(batch.actions[j]), static_cast<Eigen::Index>(j)) - batch.targets[j];
    loss += e * e;
  }
  return loss / static_cast<double>(batch.size());
}

/// Backpropagated gradient of batch_loss. Only the selected output of each
/// sample receives error signal.
inline ParameterSet loss_gradients(const QNetwork& net, const Batch& batch, double* loss_out = nullptr) {
  batch.validate(net);
  const std::size_t L = net.num_layers();
  const auto B = static_cast<Eigen::Index>(batch.size());

  std::vector<Eigen::MatrixXd> acts;  // acts[l] = input to layer l
  std::vector<Eigen::MatrixXd> pre;   // pre-activations
  acts.reserve(L + 1);
  pre.reserve(L);
  if (!batch.states.allFinite()) throw std::invalid_argument("forward: non-finite input");
  acts.push_back(batch.states);
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z;
    z.noalias() = net.layer(l).weights * acts.back();
    z.colwise() += net.layer(l).bias;
    acts.push_back(l + 1 < L ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
    pre.push_back(std::move(z));
  }

  const Eigen::MatrixXd& q = acts.back();
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(q.rows(), B);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto a = static_cast<Eigen::Index>(batch.actions[static_cast<std::size_t>(j)]);
    const double e = q(a, j) - batch.targets[static_cast<std::size_t>(j)];
    loss += e * e;
    delta(a, j) = 2.0 * e / static_cast<double>(B);
  }
  if (loss_out) *loss_out = loss / static_cast<double>(B);

  ParameterSet g;
  g.layers.resize(L);
  Eigen::MatrixXd back;
  for (std::size_t l = L; l-- > 0;) {
    g.layers[l].weights.noalias() = delta * acts[l].transpose();
    g.layers[l].bias = delta.rowwise().sum();
    if (l > 0) {
      back.noalias() = net.layer(l).weights.transpose() * delta;
      delta = (pre[l - 1].array() > 0.0).select(back, 0.0);
    }
  }
  return g;
}

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  ParameterSet m;
  ParameterSet v;
  std::uint64_t step = 0;

  static AdamState for_network(const QNetwork& net, AdamConfig cfg = {}) {
    return {cfg, ParameterSet::zeros_like(net), ParameterSet::zeros_like(net), 0};
  }
};

/// One bias-corrected Adam update.
inline void adam_update(QNetwork& net, AdamState& adam, const ParameterSet& grad) {
  if (adam.m.layers.size() != net.num_layers()) throw std::invalid_argument("adam state does not match network");
  const auto& c = adam.config;
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  auto apply = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= c.learning_rate * (m.array() / corr1) / ((v.array() / corr2).sqrt() + c.epsilon);
  };

  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    apply(net.layer(l).weights, adam.m.layers[l].weights, adam.v.layers[l].weights, grad.layers[l].weights);
    apply(net.layer(l).bias, adam.m.layers[l].bias, adam.v.layers[l].bias, grad.layers[l].bias);
  }
}

/// Rescales the gradient so its global L2 norm is at most max_norm.
inline void clip_gradients(ParameterSet& g, double max_norm) {
  double sq = 0.0;
  for (const auto& L : g.layers) sq += L.weights.squaredNorm() + L.bias.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double k = max_norm / norm;
  for (auto& L : g.layers) {
    L.weights *= k;
    L.bias *= k;
  }
}

/// Gradient step on the batch; returns the pre-update mean loss.
/// clip_norm > 0 bounds the global gradient norm (off by default).
inline double train_step(QNetwork& net, AdamState& adam, const Batch& batch, double clip_norm = 0.0) {
  double loss = 0.0;
  auto g = loss_gradients(net, batch, &loss);
  if (clip_norm > 0.0) clip_gradients(g, clip_norm);
  adam_update(net, adam, g);
  return loss;
}

}  // namespace dedqn
