#pragma once

// Double-DQN agent: replay memory, epsilon-greedy selection, decoupled
// targets and periodic target-network sync.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "dedqn/de.hpp"
#include "dedqn/features.hpp"
#include "dedqn/neural.hpp"
#include "dedqn/rng.hpp"

namespace dedqn {

struct Observation {
  State state{};
  std::size_t action = 0;
  double reward = 0.0;
  State next_state{};
  bool terminal = false;
};

/// Capacity-bounded FIFO store; the oldest observation is overwritten first.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity = 100'000) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("replay capacity must be positive");
  }

  void push(const Observation& obs) {
    if (items_.size() < capacity_) {
      items_.push_back(obs);
    } else {
      items_[head_] = obs;
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// k-th oldest observation.
  const Observation& at(std::size_t k) const { return items_.at((head_ + k) % items_.size()); }

  /// Distinct positions (0 = oldest), uniform without replacement, in
  /// random order.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const {
    if (batch_size > items_.size())
      throw std::invalid_argument("replay sample: requested " + std::to_string(batch_size) + " from " +
                                  std::to_string(items_.size()) + " stored observations");
    // Floyd's subset sampling, then a shuffle so the order is uniform too.
    const std::size_t n = items_.size();
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    std::unordered_set<std::size_t> chosen;
    for (std::size_t j = n - batch_size; j < n; ++j) {
      const std::size_t t = rng.below(j + 1);
      if (chosen.insert(t).second)
        out.push_back(t);
      else {
        chosen.insert(j);
        out.push_back(j);
      }
    }
    rng.shuffle(std::span<std::size_t>(out));
    return out;
  }

  std::vector<const Observation*> sample(std::size_t batch_size, Rng& rng) const {
    std::vector<const Observation*> out;
    for (auto k : sample_indices(batch_size, rng)) out.push_back(&at(k));
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Observation> items_;
  std::size_t head_ = 0;  // oldest item once full
};

/// Argmax with lowest-index tie-break.
inline std::size_t greedy_action(std::span<const double> q) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < q.size(); ++k)
    if (q[k] > q[best]) best = k;
  return best;
}

/// With probability epsilon a uniform action, otherwise the greedy one.
/// Always consumes one uniform draw.
inline std::size_t select_action(std::span<const double> q, double epsilon, Rng& rng) {
  if (rng.uniform() < epsilon) return rng.below(q.size());
  return greedy_action(q);
}

/// Double-Q targets: r for terminal samples, otherwise
/// r + gamma * Q_target(s', argmax_a Q_primary(s', a)).
inline std::vector<double> compute_targets(std::span<const Observation* const> batch, const QNetwork& primary,
                                           const QNetwork& target, double gamma) {
  if (!primary.same_shape(target)) throw std::invalid_argument("compute_targets: network shapes differ");
  const auto B = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd next(static_cast<Eigen::Index>(kStateDim), B);
  for (Eigen::Index j = 0; j < B; ++j)
    std::copy(batch[static_cast<std::size_t>(j)]->next_state.begin(), batch[static_cast<std::size_t>(j)]->next_state.end(),
              next.col(j).data());
  const Eigen::MatrixXd qp = primary.forward_batch(next);
  const Eigen::MatrixXd qt = target.forward_batch(next);
  std::vector<double> out(batch.size());
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto& o = *batch[static_cast<std::size_t>(j)];
    if (o.terminal) {
      out[static_cast<std::size_t>(j)] = o.reward;
      continue;
    }
    const std::size_t a = greedy_action(std::span<const double>(qp.col(j).data(), static_cast<std::size_t>(qp.rows())));
    out[static_cast<std::size_t>(j)] = o.reward + gamma * qt(static_cast<Eigen::Index>(a), j);
  }
  return out;
}

struct AgentConfig {
  double epsilon = 0.1;
  double gamma = 0.99;
  std::size_t sync_period = 1000;  // C
  std::size_t batch_size = 64;
  std::size_t warmup_size = 10'000;
  std::size_t memory_capacity = 100'000;
  std::size_t hidden_layers = 4;
  std::size_t hidden_units = 100;
  AdamConfig adam;
  double grad_clip_norm = 0.0;       // 0: no clipping
  bool normalize_rewards = false;    // divide stored rewards by the running max |r|

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (sync_period < 1) throw std::invalid_argument("sync period must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
    if (memory_capacity < batch_size) throw std::invalid_argument("memory capacity must hold one batch");
    if (hidden_units < 1) throw std::invalid_argument("hidden units must be positive");
    if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(grad_clip_norm >= 0.0)) throw std::invalid_argument("gradient clip norm must be non-negative");
  }

  std::vector<std::size_t> layer_sizes() const {
    return default_layer_sizes(kStateDim, hidden_layers, hidden_units, kNumStrategies);
  }
};

/// Primary/target pair, optimizer state and replay memory for one learner.
class Agent {
 public:
  Agent(const AgentConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        primary_(init_network(cfg.layer_sizes(), derive_seed(seed, "init"))),
        target_(primary_),
        adam_(AdamState::for_network(primary_, cfg.adam)),
        memory_(cfg.memory_capacity),
        rng_(derive_seed(seed, "agent")) {
    cfg_.validate();
  }

  const AgentConfig& config() const { return cfg_; }
  const QNetwork& primary() const { return primary_; }
  const QNetwork& target() const { return target_; }
  QNetwork& primary() { return primary_; }
  const AdamState& adam() const { return adam_; }
  const ReplayMemory& memory() const { return memory_; }
  std::uint64_t steps() const { return steps_; }
  std::uint64_t gradient_steps() const { return gradient_steps_; }
  double last_loss() const { return last_loss_; }

  std::array<double, kNumStrategies> q_values(const State& s) const {
    const Eigen::VectorXd q = primary_.forward(s);
    std::array<double, kNumStrategies> out{};
    for (std::size_t k = 0; k < kNumStrategies; ++k) out[k] = q[static_cast<Eigen::Index>(k)];
    return out;
  }

  std::size_t act(const State& s, double epsilon) {
    const auto q = q_values(s);
    return select_action(q, epsilon, rng_);
  }

  std::size_t act_greedy(const State& s) const {
    const auto q = q_values(s);
    return greedy_action(q);
  }

  std::size_t act_random() { return rng_.below(kNumStrategies); }

  /// Warm-up insertion: store only, no training, no step count.
  void remember(const Observation& obs) { memory_.push(normalised(obs)); }

  /// One training step: store, learn from a sampled batch when enough data
  /// is stored, count, and sync the target every `sync_period` steps.
  void step(const Observation& obs) {
    memory_.push(normalised(obs));
    if (memory_.size() >= cfg_.batch_size) {
      const auto batch = memory_.sample(cfg_.batch_size, rng_);
      const auto targets = compute_targets(batch, primary_, target_, cfg_.gamma);
      Batch b;
      b.states.resize(static_cast<Eigen::Index>(kStateDim), static_cast<Eigen::Index>(batch.size()));
      for (std::size_t j = 0; j < batch.size(); ++j) {
        std::copy(batch[j]->state.begin(), batch[j]->state.end(), b.states.col(static_cast<Eigen::Index>(j)).data());
        b.actions.push_back(batch[j]->action);
      }
      b.targets = targets;
      last_loss_ = train_step(primary_, adam_, b, cfg_.grad_clip_norm);
      ++gradient_steps_;
    }
    ++steps_;
    if (steps_ % cfg_.sync_period == 0) copy_weights(primary_, target_);
  }

 private:
  Observation normalised(Observation obs) {
    if (!cfg_.normalize_rewards) return obs;
    reward_scale_ = std::max(reward_scale_, std::fabs(obs.reward));
    if (reward_scale_ > 0.0) obs.reward /= reward_scale_;
    return obs;
  }

  AgentConfig cfg_;
  QNetwork primary_;
  QNetwork target_;
  AdamState adam_;
  ReplayMemory memory_;
  Rng rng_;
  std::uint64_t steps_ = 0;
  std::uint64_t gradient_steps_ = 0;
  double last_loss_ = 0.0;
  double reward_scale_ = 0.0;
};

}  // namespace dedqn
