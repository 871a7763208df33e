#pragma once

// Offline training across a problem suite, the online evaluation protocol,
// rank aggregation and the CSV writers used by the CLI.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "dedqn/bench.hpp"
#include "dedqn/checkpoint.hpp"
#include "dedqn/config.hpp"
#include "dedqn/ddqn.hpp"
#include "dedqn/de_env.hpp"
#include "dedqn/errors.hpp"
#include "dedqn/rewards.hpp"

namespace dedqn {

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- training

struct TrainReport {
  std::vector<double> cycle_rewards;  // mean per-step reward, one per cycle
  std::vector<bool> checkpointed;
  std::size_t best_cycle = 0;         // 1-based; 0 if no cycle ran
  double best_reward = -std::numeric_limits<double>::infinity();
  std::filesystem::path checkpoint;
  std::uint64_t total_evaluations = 0;  // warm-up plus training, NP initial evaluations included
  std::uint64_t warmup_steps = 0;
  bool stopped_by_patience = false;
};

struct TrainOptions {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> log;  // default: "<checkpoint>.log.csv"
  std::ostream* progress = nullptr;
};

inline std::size_t max_dimension(const std::vector<ObjectiveFunction>& suite) {
  std::size_t d = 0;
  for (const auto& f : suite) d = std::max(d, f.dim());
  return d;
}

/// Fails early if `path` cannot be created or overwritten.
inline void require_writable(const std::filesystem::path& path, const char* what) {
  const bool existed = std::filesystem::exists(path);
  {
    std::ofstream probe(path, std::ios::binary | std::ios::app);
    if (!probe) throw DataError(std::string("cannot write ") + what + " '" + path.string() + "'");
  }
  if (!existed) std::filesystem::remove(path);
}

/// Warm-up with uniform-random strategies, then cycles of one DE run per
/// training problem (reshuffled every cycle) with epsilon-greedy selection
/// and a learning step per application. The primary network is saved
/// whenever a cycle's mean reward beats every earlier cycle.
inline TrainReport train(const Config& cfg, const TrainOptions& opt) {
  cfg.validate();
  if (cfg.max_cycles == 0) throw ConfigError("max_cycles is 0: training needs at least one cycle");
  const auto suite = train_suite(cfg.suite);
  if (suite.empty()) throw ConfigError("training suite is empty");
  for (const auto& f : suite)
    if (cfg.reward.kind == RewardKind::r3 && !f.f_optimum())
      throw ConfigError("reward r3 needs a known optimum; '" + f.id() + "' has none");

  const auto log_path = opt.log ? *opt.log : std::filesystem::path(opt.checkpoint.string() + ".log.csv");
  require_writable(opt.checkpoint, "checkpoint");
  require_writable(sidecar_path(opt.checkpoint), "checkpoint sidecar");
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("cannot write training log '" + log_path.string() + "'");
  log << "# mean_reward: mean per-step reward over every run in the cycle (reward "
      << to_string(cfg.reward.kind) << ")\n";
  log << "cycle,mean_reward,checkpointed\n";
  log.flush();

  const std::size_t dim_max = max_dimension(suite);
  const EnvConfig env = cfg.env(dim_max);
  Agent agent(cfg.agent, derive_seed(cfg.seed, "agent"));
  Rng order_rng(derive_seed(cfg.seed, "order"));
  std::vector<std::size_t> order(suite.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport rep;
  rep.checkpoint = opt.checkpoint;

  CheckpointInfo info;
  info.dim_max = dim_max;
  info.config_hash = config_hash(cfg);
  info.extra["reward"] = std::string(to_string(cfg.reward.kind));
  info.extra["seed"] = cfg.seed;

  auto reward_of = [&](const ObjectiveFunction& f, const StepOutcome& o) {
    return reward(cfg.reward, o.parent_f, o.trial_f, o.f_bsf_before, f.f_optimum().value_or(NAN));
  };

  // Warm-up: fill the memory with random-strategy observations.
  {
    Rng policy(derive_seed(cfg.seed, "warmup-policy"));
    std::size_t run_index = 0;
    while (rep.warmup_steps < cfg.agent.warmup_size) {
      order_rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t k = 0; k < order.size() && rep.warmup_steps < cfg.agent.warmup_size; ++k) {
        const auto& f = suite[order[k]];
        DeRun run(f, env, derive_seed(cfg.seed, "warmup", f.id(), run_index++));
        rep.total_evaluations += cfg.de.NP;
        State s = run.observe();
        while (!run.done() && rep.warmup_steps < cfg.agent.warmup_size) {
          const std::size_t a = policy.below(kNumStrategies);
          const auto o = run.step(strategy_from_ordinal(a));
          ++rep.total_evaluations;
          Observation obs{s, a, reward_of(f, o), {}, o.done};
          if (!o.done) obs.next_state = run.observe();
          agent.remember(obs);
          s = obs.next_state;
          ++rep.warmup_steps;
        }
      }
    }
    if (opt.progress && rep.warmup_steps)
      *opt.progress << "warm-up: " << rep.warmup_steps << " random-strategy observations\n";
  }

  std::size_t since_best = 0;
  for (std::size_t cycle = 1; cycle <= cfg.max_cycles; ++cycle) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::uint64_t steps = 0;
    for (auto p : order) {
      const auto& f = suite[p];
      DeRun run(f, env, derive_seed(cfg.seed, "train", f.id(), cycle));
      rep.total_evaluations += cfg.de.NP;
      State s = run.observe();
      while (!run.done()) {
        const std::size_t a = agent.act(s, cfg.agent.epsilon);
        const auto o = run.step(strategy_from_ordinal(a));
        ++rep.total_evaluations;
        Observation obs{s, a, reward_of(f, o), {}, o.done};
        if (!o.done) obs.next_state = run.observe();
        agent.step(obs);
        total += obs.reward;
        ++steps;
        s = obs.next_state;
      }
    }
    const double mean = steps ? total / static_cast<double>(steps) : 0.0;
    const bool better = mean > rep.best_reward;
    if (better) {
      rep.best_reward = mean;
      rep.best_cycle = cycle;
      info.extra["cycle"] = cycle;
      info.extra["mean_reward"] = mean;
      save_checkpoint(opt.checkpoint, agent.primary(), &agent.adam(), info);
      since_best = 0;
    } else {
      ++since_best;
    }
    rep.cycle_rewards.push_back(mean);
    rep.checkpointed.push_back(better);
    log << cycle << ',' << format_number(mean) << ',' << (better ? 1 : 0) << '\n';
    log.flush();
    if (opt.progress)
      *opt.progress << "cycle " << cycle << ": mean reward " << mean << (better ? " (checkpoint)" : "") << "\n";
    if (since_best >= cfg.patience && cfg.patience > 0) {
      rep.stopped_by_patience = true;
      break;
    }
  }
  return rep;
}

// -------------------------------------------------------------- evaluation

struct PolicySpec {
  enum class Kind { fixed, random_uniform, ddqn };
  Kind kind = Kind::random_uniform;
  Strategy strategy = Strategy::rand1;
  std::filesystem::path checkpoint;
  std::string name;
};

/// "fixed:<strategy>" (or the bare strategy name), "random", "ddqn:<checkpoint>".
inline PolicySpec parse_policy(const std::string& text) {
  PolicySpec p;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string tail = colon == std::string::npos ? std::string{} : text.substr(colon + 1);
  if (head == "random" && colon == std::string::npos) {
    p.kind = PolicySpec::Kind::random_uniform;
    p.name = "random";
  } else if (head == "fixed" && !tail.empty()) {
    p.kind = PolicySpec::Kind::fixed;
    p.strategy = parse_strategy(tail);
    p.name = "DE-" + tail;
  } else if (head == "ddqn" && !tail.empty()) {
    p.kind = PolicySpec::Kind::ddqn;
    p.checkpoint = tail;
    p.name = "ddqn-" + p.checkpoint.stem().string();
  } else if (colon == std::string::npos) {
    p.kind = PolicySpec::Kind::fixed;
    p.strategy = parse_strategy(text);
    p.name = "DE-" + text;
  } else {
    throw ConfigError("unknown policy '" + text + "' (expected fixed:<strategy>, random or ddqn:<checkpoint>)");
  }
  return p;
}

struct RunRecord {
  std::string method;
  std::string problem;
  std::size_t dim = 0;
  std::size_t run = 0;
  double final_error = 0.0;
  std::uint64_t evals_used = 0;
};

struct EvalResults {
  std::vector<std::string> methods;
  std::vector<std::string> problems;
  std::vector<std::size_t> dims;                 // per problem
  std::vector<RunRecord> runs;                   // method-major, then problem, then run
  std::vector<std::vector<double>> mean_error;   // [method][problem]
  std::vector<std::vector<double>> std_error;    // [method][problem], sample std (0 for one run)
  std::vector<double> mean_rank;                 // per method
};

/// Average ranks per problem (column), lower value = better, ties share the
/// mean of their positions; returns the mean over problems per method.
inline std::vector<double> rank(const std::vector<std::vector<double>>& values) {
  if (values.empty()) return {};
  const std::size_t M = values.size();
  const std::size_t P = values.front().size();
  for (const auto& row : values) {
    if (row.size() != P) throw std::invalid_argument("rank: ragged results matrix");
    for (double v : row)
      if (!std::isfinite(v)) throw std::invalid_argument("rank: non-finite entry in results matrix");
  }
  std::vector<double> sum(M, 0.0);
  std::vector<std::size_t> idx(M);
  for (std::size_t p = 0; p < P; ++p) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a][p] < values[b][p]; });
    for (std::size_t k = 0; k < M;) {
      std::size_t e = k + 1;
      while (e < M && values[idx[e]][p] == values[idx[k]][p]) ++e;
      const double r = 0.5 * static_cast<double>(k + 1 + e);  // mean of positions k+1..e
      for (std::size_t j = k; j < e; ++j) sum[idx[j]] += r;
      k = e;
    }
  }
  for (auto& s : sum) s /= static_cast<double>(P ? P : 1);
  return sum;
}

namespace detail {

struct LoadedPolicy {
  PolicySpec spec;
  std::shared_ptr<const QNetwork> net;
  std::size_t dim_max = 0;
};

inline LoadedPolicy load_policy(const PolicySpec& spec) {
  LoadedPolicy lp{spec, nullptr, 0};
  if (spec.kind != PolicySpec::Kind::ddqn) return lp;
  auto ck = load_checkpoint(spec.checkpoint);
  if (ck.net.inputs() != kStateDim || ck.net.outputs() != kNumStrategies)
    throw DataError(spec.checkpoint.string() + ": network shape does not match the state/strategy sizes");
  if (ck.info.dim_max == 0)
    throw DataError(sidecar_path(spec.checkpoint).string() + ": missing dim_max (sidecar absent or incomplete)");
  lp.dim_max = ck.info.dim_max;
  lp.net = std::make_shared<const QNetwork>(std::move(ck.net));
  return lp;
}

}  // namespace detail

/// Runs one policy on one problem to completion; returns (final error, evaluations).
/// `on_step`, if given, sees the run after every application.
inline std::pair<double, std::uint64_t> run_policy(const detail::LoadedPolicy& policy, const ObjectiveFunction& f,
                                                   const Config& cfg, std::uint64_t seed,
                                                   const std::function<void(const DeRun&, Strategy)>& on_step = {}) {
  const std::size_t dim_max = policy.dim_max ? policy.dim_max : f.dim();
  DeRun run(f, cfg.env(dim_max), seed);
  Rng choice(derive_seed(seed, "policy"));
  while (!run.done()) {
    Strategy s = policy.spec.strategy;
    switch (policy.spec.kind) {
      case PolicySpec::Kind::fixed: break;
      case PolicySpec::Kind::random_uniform: s = strategy_from_ordinal(choice.below(kNumStrategies)); break;
      case PolicySpec::Kind::ddqn: {
        const State st = run.observe();
        const Eigen::VectorXd q = policy.net->forward(st);
        s = strategy_from_ordinal(greedy_action(std::span<const double>(q.data(), static_cast<std::size_t>(q.size()))));
        break;
      }
    }
    run.step(s);
    if (on_step) on_step(run, s);
  }
  return {run.error(), run.run_state().evals};
}

/// Fresh DE run per (policy, problem, run) with seed
/// derive_seed(seed, method, problem, run). ddqn policies act greedily.
/// `jobs` > 1 spreads runs over threads; results are ordered identically.
inline EvalResults evaluate(const std::vector<PolicySpec>& policies, const std::vector<ObjectiveFunction>& suite,
                            const Config& cfg, std::size_t runs, std::uint64_t seed, std::size_t jobs = 1) {
  if (policies.empty()) throw ConfigError("no policies to evaluate");
  if (suite.empty()) throw ConfigError("evaluation suite is empty");
  if (runs == 0) throw ConfigError("runs must be positive");
  EvalResults res;
  std::vector<detail::LoadedPolicy> loaded;
  for (const auto& p : policies) {
    if (std::find(res.methods.begin(), res.methods.end(), p.name) != res.methods.end())
      throw ConfigError("duplicate policy name '" + p.name + "'");
    res.methods.push_back(p.name);
    loaded.push_back(detail::load_policy(p));
  }
  for (const auto& f : suite) {
    res.problems.push_back(f.id());
    res.dims.push_back(f.dim());
  }

  const std::size_t M = policies.size(), P = suite.size();
  const std::size_t total = M * P * runs;
  res.runs.resize(total);
  auto task = [&](std::size_t t) {
    const std::size_t m = t / (P * runs);
    const std::size_t p = (t / runs) % P;
    const std::size_t r = t % runs;
    const auto& f = suite[p];
    const auto [err, evals] = run_policy(loaded[m], f, cfg, derive_seed(seed, res.methods[m], f.id(), r));
    res.runs[t] = RunRecord{res.methods[m], f.id(), f.dim(), r, err, evals};
  };

  jobs = std::max<std::size_t>(1, std::min(jobs, total));
  if (jobs == 1) {
    for (std::size_t t = 0; t < total; ++t) task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w)
      workers.emplace_back([&] {
        for (std::size_t t; (t = next.fetch_add(1)) < total;) {
          try {
            task(t);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = total;
          }
        }
      });
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
  }

  res.mean_error.assign(M, std::vector<double>(P, 0.0));
  res.std_error.assign(M, std::vector<double>(P, 0.0));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t p = 0; p < P; ++p) {
      const auto* first = &res.runs[(m * P + p) * runs];
      double mean = 0.0;
      for (std::size_t r = 0; r < runs; ++r) mean += first[r].final_error;
      mean /= static_cast<double>(runs);
      double ss = 0.0;
      for (std::size_t r = 0; r < runs; ++r) ss += (first[r].final_error - mean) * (first[r].final_error - mean);
      res.mean_error[m][p] = mean;
      res.std_error[m][p] = runs > 1 ? std::sqrt(ss / static_cast<double>(runs - 1)) : 0.0;
    }
  res.mean_rank = rank(res.mean_error);
  return res;
}

// ----------------------------------------------------------------- outputs

inline void write_results_csv(std::ostream& out, const EvalResults& res) {
  out << "method,problem,dim,run,final_error,evals_used\n";
  for (const auto& r : res.runs)
    out << r.method << ',' << r.problem << ',' << r.dim << ',' << r.run << ',' << format_number(r.final_error) << ','
        << r.evals_used << '\n';
}

inline void write_summary_csv(std::ostream& out, const EvalResults& res) {
  out << "method,problem,dim,mean_error,std_error\n";
  for (std::size_t m = 0; m < res.methods.size(); ++m)
    for (std::size_t p = 0; p < res.problems.size(); ++p)
      out << res.methods[m] << ',' << res.problems[p] << ',' << res.dims[p] << ','
          << format_number(res.mean_error[m][p]) << ',' << format_number(res.std_error[m][p]) << '\n';
}

inline void write_ranks_csv(std::ostream& out, const EvalResults& res) {
  out << "method,mean_rank\n";
  for (std::size_t m = 0; m < res.methods.size(); ++m)
    out << res.methods[m] << ',' << format_number(res.mean_rank[m]) << '\n';
}

/// Per-step feature audit trace of one policy on one problem:
/// problem,step,parent,strategy,f_bsf,s1..s99 (the state seen before acting).
inline void dump_features(std::ostream& out, const PolicySpec& policy, const ObjectiveFunction& f, const Config& cfg,
                          std::uint64_t seed, std::size_t dim_max = 0, bool header = true) {
  auto lp = detail::load_policy(policy);
  if (!lp.dim_max) lp.dim_max = dim_max ? dim_max : f.dim();
  if (header) {
    out << "problem,step,parent,strategy,f_bsf";
    for (std::size_t k = 1; k <= kStateDim; ++k) out << ",s" << k;
    out << '\n';
  }
  DeRun run(f, cfg.env(lp.dim_max), seed);
  Rng choice(derive_seed(seed, "policy"));
  for (std::size_t step = 0; !run.done(); ++step) {
    const std::size_t parent = run.current_parent();
    const double f_bsf = run.run_state().f_bsf;
    const State st = run.observe();
    Strategy s = lp.spec.strategy;
    if (lp.spec.kind == PolicySpec::Kind::random_uniform) {
      s = strategy_from_ordinal(choice.below(kNumStrategies));
    } else if (lp.spec.kind == PolicySpec::Kind::ddqn) {
      const Eigen::VectorXd q = lp.net->forward(st);
      s = strategy_from_ordinal(greedy_action(std::span<const double>(q.data(), static_cast<std::size_t>(q.size()))));
    }
    out << f.id() << ',' << step << ',' << parent << ',' << to_string(s) << ',' << format_number(f_bsf);
    for (double v : st) out << ',' << format_number(v);
    out << '\n';
    run.step(s);
  }
}

}  // namespace dedqn
