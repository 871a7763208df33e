#pragma once

// The 99-dimensional DE state vector.
//
// Layout (0-based index = feature number - 1):
//   0      parent fitness relative to [f_bsf, f_wsf]
//   1      population mean fitness, same normalisation
//   2      population fitness std / std_max
//   3      remaining budget fraction
//   4      dim / dim_max
//   5      stagnation count / budget
//   6..10  distance to each of the five drawn donors / box diagonal
//   11     distance to the best parent / box diagonal
//   12..16 fitness difference to each donor / (f_wsf - f_bsf)
//   17     fitness difference to the best parent / (f_wsf - f_bsf)
//   18     distance to the best-so-far solution / box diagonal
//   19..98 five operator-history groups of 16, index = base + 4 * metric + op
//
// Operator-history groups are normalised across the four operators of the
// same metric. A zero denominator anywhere yields a zero feature.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <vector>

#include "dedqn/de.hpp"

namespace dedqn {

inline constexpr std::size_t kStateDim = 99;
inline constexpr std::size_t kNumMetrics = 4;
inline constexpr std::uint32_t kFeatureLayoutVersion = 1;

using State = std::array<double, kStateDim>;
using OperatorMetrics = std::array<double, kNumMetrics>;

namespace feature_index {
inline constexpr std::size_t success_rate = 19;
inline constexpr std::size_t mean_improvement = 35;
inline constexpr std::size_t best_delta = 51;
inline constexpr std::size_t best_sum = 67;
inline constexpr std::size_t window_sum = 83;

inline constexpr std::size_t of(std::size_t group_base, std::size_t metric, Strategy op) {
  return group_base + metric * kNumStrategies + ordinal(op);
}
}  // namespace feature_index

struct RunState {
  double f_bsf = 0.0;
  double f_wsf = 0.0;
  std::vector<double> x_bsf;
  std::size_t evals = 0;
  std::size_t budget = 0;
  std::size_t stagcount = 0;
  std::size_t dim = 0;
  std::size_t dim_max = 0;
  double dist_max = 0.0;

  /// Std of a population split half at f_wsf, half at f_bsf.
  double std_max() const { return (f_wsf - f_bsf) / 2.0; }
};

/// OM1..OM4: improvement of the trial over the parent, the best parent, the
/// best-so-far value and the median parent fitness.
inline OperatorMetrics operator_metrics(double parent_f, double trial_f, double f_best_parent, double f_bsf,
                                        double f_median) {
  return {parent_f - trial_f, f_best_parent - trial_f, f_bsf - trial_f, f_median - trial_f};
}

struct OperatorRecord {
  std::size_t n_total = 0;
  std::array<std::size_t, kNumMetrics> n_success{};
  std::array<double, kNumMetrics> om_sum{};
  std::array<double, kNumMetrics> om_best{};
};

struct GenerationRecord {
  std::array<OperatorRecord, kNumStrategies> ops{};
};

/// Per-operator success bookkeeping over the most recent `gen` generations.
class OperatorHistory {
 public:
  explicit OperatorHistory(std::size_t generations = 10) : capacity_(generations) {
    if (capacity_ == 0) throw std::invalid_argument("history must keep at least one generation");
  }

  /// Opens a new (empty) generation record, dropping the oldest past capacity.
  void rotate_generation() {
    ring_.emplace_back();
    while (ring_.size() > capacity_) ring_.pop_front();
  }

  /// Counts one application of `op` in the current generation and records
  /// every strictly positive metric value.
  void record(Strategy op, const OperatorMetrics& om) {
    if (ring_.empty()) throw std::logic_error("record before the first generation was opened");
    auto& rec = ring_.back().ops[ordinal(op)];
    ++rec.n_total;
    for (std::size_t m = 0; m < kNumMetrics; ++m) {
      if (om[m] > 0.0) {
        ++rec.n_success[m];
        rec.om_sum[m] += om[m];
        rec.om_best[m] = std::max(rec.om_best[m], om[m]);
      }
    }
  }

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// Oldest first.
  const GenerationRecord& generation(std::size_t g) const { return ring_.at(g); }
  const std::deque<GenerationRecord>& generations() const { return ring_; }

 private:
  std::size_t capacity_;
  std::deque<GenerationRecord> ring_;
};

struct WindowEntry {
  Strategy op;
  OperatorMetrics om;  // negative metrics stored as 0
  double f_trial;
  std::uint64_t seq;
};

/// Fixed-size window of improving applications. When full, a new entry
/// replaces the oldest entry of the same operator, or, if that operator has
/// none, the entry with the highest trial fitness.
class MetricWindow {
 public:
  explicit MetricWindow(std::size_t capacity = 50) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("window capacity must be positive");
    entries_.reserve(capacity_);
  }

  void insert(Strategy op, const OperatorMetrics& om, double f_trial) {
    WindowEntry e{op, {}, f_trial, next_seq_++};
    for (std::size_t m = 0; m < kNumMetrics; ++m) e.om[m] = std::max(om[m], 0.0);
    if (entries_.size() < capacity_) {
      entries_.push_back(e);
      return;
    }
    auto victim = entries_.end();
    for (auto it = entries_.begin(); it != entries_.end(); ++it)
      if (it->op == op && (victim == entries_.end() || it->seq < victim->seq)) victim = it;
    if (victim == entries_.end()) {
      victim = entries_.begin();
      for (auto it = entries_.begin(); it != entries_.end(); ++it)
        if (it->f_trial > victim->f_trial) victim = it;
    }
    entries_.erase(victim);
    entries_.push_back(e);
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::span<const WindowEntry> entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::vector<WindowEntry> entries_;
  std::uint64_t next_seq_ = 0;
};

/// Bookkeeping for one operator application, using pre-selection values.
/// Returns the four metric values.
inline OperatorMetrics record_application(OperatorHistory& hist, MetricWindow& win, Strategy op, double parent_f,
                                          double trial_f, double f_best_parent, double f_bsf, double f_median) {
  const auto om = operator_metrics(parent_f, trial_f, f_best_parent, f_bsf, f_median);
  hist.record(op, om);
  if (om[0] > 0.0) win.insert(op, om, trial_f);
  return om;
}

namespace detail {

inline double safe_ratio(double num, double den) {
  if (den == 0.0 || !std::isfinite(den)) return 0.0;
  const double v = num / den;
  return std::isfinite(v) ? v : 0.0;
}

inline double unit_clamp(double v) { return std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0; }

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

using OperatorTable = std::array<std::array<double, kNumStrategies>, kNumMetrics>;

// Negative entries are floored at 0, then each metric row is divided by its
// sum over the four operators.
inline void write_normalised(State& s, std::size_t base, const OperatorTable& raw) {
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    std::array<double, kNumStrategies> v{};
    double total = 0.0;
    for (std::size_t op = 0; op < kNumStrategies; ++op) {
      v[op] = std::isfinite(raw[m][op]) ? std::max(raw[m][op], 0.0) : 0.0;
      total += v[op];
    }
    for (std::size_t op = 0; op < kNumStrategies; ++op)
      s[base + m * kNumStrategies + op] = total > 0.0 ? unit_clamp(v[op] / total) : 0.0;
  }
}

}  // namespace detail

/// Raw (pre-normalisation) operator-history tables, exposed for auditing.
struct OperatorTables {
  detail::OperatorTable success_rate{};
  detail::OperatorTable mean_improvement{};
  detail::OperatorTable best_delta{};
  detail::OperatorTable best_sum{};
  detail::OperatorTable window_sum{};
};

inline OperatorTables operator_tables(const OperatorHistory& hist, const MetricWindow& win) {
  OperatorTables t;
  const auto& ring = hist.generations();
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    for (std::size_t op = 0; op < kNumStrategies; ++op) {
      double sr = 0.0, sum = 0.0, best_sum = 0.0;
      std::size_t total = 0;
      for (const auto& g : ring) {
        const auto& rec = g.ops[op];
        if (rec.n_total > 0) sr += static_cast<double>(rec.n_success[m]) / static_cast<double>(rec.n_total);
        sum += rec.om_sum[m];
        total += rec.n_total;
        best_sum += rec.om_best[m];
      }
      t.success_rate[m][op] = sr;
      t.mean_improvement[m][op] = detail::safe_ratio(sum, static_cast<double>(total));
      t.best_sum[m][op] = best_sum;
      if (ring.size() >= 2) {
        const auto& last = ring[ring.size() - 1].ops[op];
        const auto& prev = ring[ring.size() - 2].ops[op];
        const double dn = std::fabs(static_cast<double>(last.n_total) - static_cast<double>(prev.n_total));
        t.best_delta[m][op] = detail::safe_ratio(last.om_best[m] - prev.om_best[m], prev.om_best[m] * dn);
      }
    }
  }
  for (const auto& e : win.entries())
    for (std::size_t m = 0; m < kNumMetrics; ++m) t.window_sum[m][ordinal(e.op)] += e.om[m];
  return t;
}

/// State vector for parent i with donor indices r. Inputs are not modified.
inline State compute_state(const RunState& run, const Population& pop, std::size_t i, const DonorIndices& r,
                           const OperatorHistory& hist, const MetricWindow& win) {
  using detail::safe_ratio;
  using detail::unit_clamp;
  State s{};
  const double range = run.f_wsf - run.f_bsf;
  const double fi = pop.fitness(i);
  const auto xi = pop.member(i);
  const std::size_t np = pop.size();

  double mean = 0.0;
  for (double f : pop.fitness()) mean += f;
  mean /= static_cast<double>(np);
  double var = 0.0;
  for (double f : pop.fitness()) var += (f - mean) * (f - mean);
  const double stdev = std::sqrt(var / static_cast<double>(np));

  const double budget = static_cast<double>(run.budget);
  s[0] = safe_ratio(fi - run.f_bsf, range);
  s[1] = safe_ratio(mean - run.f_bsf, range);
  s[2] = safe_ratio(stdev, run.std_max());
  s[3] = safe_ratio(budget - static_cast<double>(run.evals), budget);
  s[4] = safe_ratio(static_cast<double>(run.dim), static_cast<double>(run.dim_max));
  s[5] = safe_ratio(static_cast<double>(run.stagcount), budget);
  for (std::size_t k = 0; k < 5; ++k) {
    s[6 + k] = safe_ratio(detail::distance(xi, pop.member(r[k])), run.dist_max);
    s[12 + k] = safe_ratio(fi - pop.fitness(r[k]), range);
  }
  s[11] = safe_ratio(detail::distance(xi, pop.member(pop.best_index())), run.dist_max);
  s[17] = safe_ratio(fi - pop.best_fitness(), range);
  if (run.x_bsf.size() == xi.size()) s[18] = safe_ratio(detail::distance(xi, run.x_bsf), run.dist_max);
  for (std::size_t k = 0; k < 19; ++k) s[k] = unit_clamp(s[k]);

  const auto t = operator_tables(hist, win);
  detail::write_normalised(s, feature_index::success_rate, t.success_rate);
  detail::write_normalised(s, feature_index::mean_improvement, t.mean_improvement);
  detail::write_normalised(s, feature_index::best_delta, t.best_delta);
  detail::write_normalised(s, feature_index::best_sum, t.best_sum);
  detail::write_normalised(s, feature_index::window_sum, t.window_sum);
  return s;
}

}  // namespace dedqn
