#pragma once

// Differential evolution building blocks: population, the four mutation
// strategies, binomial crossover, bound repair and greedy selection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dedqn/bench.hpp"
#include "dedqn/errors.hpp"
#include "dedqn/rng.hpp"

namespace dedqn {

/// Mutation strategy. Ordinals are frozen: feature blocks and Q-network
/// outputs are indexed by them.
enum class Strategy : std::uint8_t { rand1 = 0, rand2 = 1, rand_to_best2 = 2, curr_to_rand1 = 3 };

inline constexpr std::size_t kNumStrategies = 4;
inline constexpr std::array<Strategy, kNumStrategies> kAllStrategies = {
    Strategy::rand1, Strategy::rand2, Strategy::rand_to_best2, Strategy::curr_to_rand1};

inline constexpr std::size_t ordinal(Strategy s) { return static_cast<std::size_t>(s); }

inline constexpr std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::rand1: return "rand1";
    case Strategy::rand2: return "rand2";
    case Strategy::rand_to_best2: return "rand_to_best2";
    case Strategy::curr_to_rand1: return "curr_to_rand1";
  }
  return "?";
}

inline Strategy strategy_from_ordinal(std::size_t k) {
  if (k >= kNumStrategies) throw std::out_of_range("strategy ordinal " + std::to_string(k));
  return static_cast<Strategy>(k);
}

inline Strategy parse_strategy(std::string_view name) {
  for (auto s : kAllStrategies)
    if (to_string(s) == name) return s;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected rand1, rand2, rand_to_best2 or curr_to_rand1)");
}

struct DeParams {
  double F = 0.5;
  double CR = 1.0;
  std::size_t NP = 100;
  std::size_t budget = 10'000;  // FE^max, including the NP initial evaluations

  void validate() const {
    if (NP < 6) throw std::invalid_argument("population size must be at least 6, got " + std::to_string(NP));
    if (!(CR >= 0.0 && CR <= 1.0)) throw std::invalid_argument("crossover rate must lie in [0, 1]");
    if (!std::isfinite(F)) throw std::invalid_argument("scaling factor must be finite");
    if (budget <= NP)
      throw std::invalid_argument("evaluation budget must exceed the population size");
  }
};

/// NP members stored row-major in one buffer.
class Population {
 public:
  Population() = default;
  Population(std::size_t np, std::size_t dim) : np_(np), dim_(dim), x_(np * dim), fitness_(np) {}

  std::size_t size() const { return np_; }
  std::size_t dim() const { return dim_; }

  std::span<double> member(std::size_t i) { return {x_.data() + i * dim_, dim_}; }
  std::span<const double> member(std::size_t i) const { return {x_.data() + i * dim_, dim_}; }
  double fitness(std::size_t i) const { return fitness_[i]; }
  std::span<const double> fitness() const { return fitness_; }

  std::size_t best_index() const { return best_; }
  double best_fitness() const { return fitness_[best_]; }

  void set(std::size_t i, std::span<const double> x, double f) {
    std::copy(x.begin(), x.end(), member(i).begin());
    fitness_[i] = f;
  }

  /// Argmin of fitness, lowest index on ties.
  void refresh_best() {
    best_ = 0;
    for (std::size_t i = 1; i < np_; ++i)
      if (fitness_[i] < fitness_[best_]) best_ = i;
  }

 private:
  std::size_t np_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> x_;
  std::vector<double> fitness_;
  std::size_t best_ = 0;
};

/// Uniform members in the box, evaluated. Uses exactly NP evaluations.
inline Population initialize_population(const ObjectiveFunction& func, std::size_t np, Rng& rng) {
  if (np < 6) throw std::invalid_argument("population size must be at least 6, got " + std::to_string(np));
  Population pop(np, func.dim());
  const auto lo = func.lower();
  const auto hi = func.upper();
  for (std::size_t i = 0; i < np; ++i) {
    auto x = pop.member(i);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = rng.uniform(lo[j], hi[j]);
    pop.set(i, x, func(x));
  }
  pop.refresh_best();
  return pop;
}

inline Population initialize_population(const ObjectiveFunction& func, std::size_t np, std::uint64_t seed) {
  Rng rng(seed);
  return initialize_population(func, np, rng);
}

using DonorIndices = std::array<std::size_t, 5>;

/// Five pairwise-distinct indices in [0, np), none equal to i. All five are
/// drawn regardless of the strategy that will consume them.
inline DonorIndices draw_indices(std::size_t np, std::size_t i, Rng& rng) {
  if (np < 6) throw std::invalid_argument("need at least 6 members to draw 5 donors");
  DonorIndices r{};
  for (std::size_t k = 0; k < r.size(); ++k) {
    for (;;) {
      const std::size_t c = rng.below(np);
      if (c == i) continue;
      if (std::find(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k), c) != r.begin() + static_cast<std::ptrdiff_t>(k))
        continue;
      r[k] = c;
      break;
    }
  }
  return r;
}

/// Donor vector for parent i.
inline std::vector<double> mutate(Strategy s, const Population& pop, std::size_t i, const DonorIndices& r,
                                  double F) {
  const std::size_t d = pop.dim();
  const auto xi = pop.member(i);
  const auto x1 = pop.member(r[0]);
  const auto x2 = pop.member(r[1]);
  const auto x3 = pop.member(r[2]);
  const auto x4 = pop.member(r[3]);
  const auto x5 = pop.member(r[4]);
  const auto xb = pop.member(pop.best_index());
  std::vector<double> v(d);
  switch (s) {
    case Strategy::rand1:
      for (std::size_t j = 0; j < d; ++j) v[j] = x1[j] + F * (x2[j] - x3[j]);
      break;
    case Strategy::rand2:
      for (std::size_t j = 0; j < d; ++j) v[j] = x1[j] + F * (x2[j] - x3[j] + x4[j] - x5[j]);
      break;
    case Strategy::rand_to_best2:
      for (std::size_t j = 0; j < d; ++j)
        v[j] = x1[j] + F * (xb[j] - x1[j] + x2[j] - x3[j] + x4[j] - x5[j]);
      break;
    case Strategy::curr_to_rand1:
      for (std::size_t j = 0; j < d; ++j) v[j] = xi[j] + F * (x1[j] - xi[j] + x2[j] - x3[j]);
      break;
  }
  return v;
}

/// Binomial crossover with one forced donor coordinate. Consumes one index
/// draw plus one uniform per coordinate.
inline std::vector<double> crossover(std::span<const double> parent, std::span<const double> donor, double CR,
                                     Rng& rng) {
  if (parent.size() != donor.size()) throw std::invalid_argument("crossover: length mismatch");
  const std::size_t jrand = rng.below(parent.size());
  std::vector<double> trial(parent.begin(), parent.end());
  for (std::size_t j = 0; j < trial.size(); ++j) {
    const bool take = rng.uniform() < CR;
    if (take || j == jrand) trial[j] = donor[j];
  }
  return trial;
}

/// Clamp each coordinate into the box.
inline void repair(std::span<double> x, const ObjectiveFunction& func) {
  const auto lo = func.lower();
  const auto hi = func.upper();
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j], lo[j], hi[j]);
}

/// Greedy replacement on strict improvement. Returns true when the trial
/// replaced member i.
inline bool select(Population& pop, std::size_t i, std::span<const double> trial, double f_trial) {
  if (!(f_trial < pop.fitness(i))) return false;
  pop.set(i, trial, f_trial);
  pop.refresh_best();
  return true;
}

}  // namespace dedqn
