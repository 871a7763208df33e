#pragma once

// One DE run exposed as an RL environment: one step = one parent, one
// operator application, one function evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "dedqn/bench.hpp"
#include "dedqn/de.hpp"
#include "dedqn/features.hpp"
#include "dedqn/rng.hpp"

namespace dedqn {

struct EnvConfig {
  DeParams de;
  std::size_t history_generations = 10;  // gen
  std::size_t window_size = 50;          // W
  std::size_t dim_max = 0;               // 0: use the function's own dimension
  double stop_tolerance = 1e-8;
};

/// Everything the reward and feature code needs about one application.
struct StepOutcome {
  Strategy action;
  std::size_t parent;
  double parent_f;
  double trial_f;
  double f_bsf_before;
  double f_best_parent;
  double f_median;
  OperatorMetrics metrics;
  bool replaced;
  bool improved_bsf;
  bool done;
};

inline double median_of(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

class DeRun {
 public:
  DeRun(const ObjectiveFunction& func, const EnvConfig& cfg, std::uint64_t seed)
      : func_(&func), cfg_(cfg), rng_(seed), hist_(cfg.history_generations), win_(cfg.window_size) {
    cfg_.de.validate();
    pop_ = initialize_population(func, cfg_.de.NP, rng_);
    run_.budget = cfg_.de.budget;
    run_.evals = cfg_.de.NP;
    run_.dim = func.dim();
    run_.dim_max = cfg_.dim_max ? cfg_.dim_max : func.dim();
    run_.dist_max = func.diagonal();
    run_.f_bsf = pop_.best_fitness();
    run_.f_wsf = *std::max_element(pop_.fitness().begin(), pop_.fitness().end());
    run_.x_bsf.assign(pop_.member(pop_.best_index()).begin(), pop_.member(pop_.best_index()).end());
    run_.stagcount = 0;
    hist_.rotate_generation();
    update_done();
  }

  const ObjectiveFunction& function() const { return *func_; }
  const Population& population() const { return pop_; }
  const RunState& run_state() const { return run_; }
  const OperatorHistory& history() const { return hist_; }
  const MetricWindow& window() const { return win_; }
  const EnvConfig& config() const { return cfg_; }
  std::size_t current_parent() const { return cursor_; }
  std::size_t generation() const { return generation_; }
  bool done() const { return done_; }

  /// Donor indices for the current parent; drawn once per step, before the
  /// action is chosen, so the state and the mutation agree.
  const DonorIndices& donors() {
    if (!pending_) pending_ = draw_indices(pop_.size(), cursor_, rng_);
    return *pending_;
  }

  State observe() {
    const auto& r = donors();
    return compute_state(run_, pop_, cursor_, r, hist_, win_);
  }

  /// mutate -> crossover -> repair -> evaluate -> bookkeeping -> select.
  StepOutcome step(Strategy action) {
    if (done_) throw std::logic_error("env step on a finished run (" + func_->id() + ")");
    const std::size_t i = cursor_;
    const DonorIndices r = donors();

    auto donor = mutate(action, pop_, i, r, cfg_.de.F);
    auto trial = crossover(pop_.member(i), donor, cfg_.de.CR, rng_);
    repair(trial, *func_);
    const double f_trial = (*func_)(trial);
    ++run_.evals;

    StepOutcome out{};
    out.action = action;
    out.parent = i;
    out.parent_f = pop_.fitness(i);
    out.trial_f = f_trial;
    out.f_bsf_before = run_.f_bsf;
    out.f_best_parent = pop_.best_fitness();
    out.f_median = median_of(pop_.fitness());
    out.metrics = record_application(hist_, win_, action, out.parent_f, f_trial, out.f_best_parent, run_.f_bsf,
                                     out.f_median);
    out.replaced = select(pop_, i, trial, f_trial);

    run_.f_wsf = std::max(run_.f_wsf, f_trial);
    if (f_trial < run_.f_bsf) {
      run_.f_bsf = f_trial;
      run_.x_bsf = trial;
      run_.stagcount = 0;
      out.improved_bsf = true;
    } else {
      ++run_.stagcount;
    }

    pending_.reset();
    if (++cursor_ == pop_.size()) {
      cursor_ = 0;
      ++generation_;
      hist_.rotate_generation();
    }
    update_done();
    out.done = done_;
    return out;
  }

  /// Final error: best-so-far minus the known optimum, or the raw best value.
  double error() const {
    const auto opt = func_->f_optimum();
    return opt ? run_.f_bsf - *opt : run_.f_bsf;
  }

 private:
  void update_done() {
    const auto opt = func_->f_optimum();
    done_ = run_.evals >= run_.budget || (opt && std::fabs(run_.f_bsf - *opt) < cfg_.stop_tolerance);
  }

  const ObjectiveFunction* func_;
  EnvConfig cfg_;
  Rng rng_;
  Population pop_;
  RunState run_;
  OperatorHistory hist_;
  MetricWindow win_;
  std::optional<DonorIndices> pending_;
  std::size_t cursor_ = 0;
  std::size_t generation_ = 0;
  bool done_ = false;
};

}  // namespace dedqn
