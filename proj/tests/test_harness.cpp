#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "dedqn/harness.hpp"

using namespace dedqn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("dedqn_h_" + std::to_string(::getpid()) + "_" +
                                                ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Small enough that a whole train + eval round trip takes a couple of seconds.
Config tiny_config() {
  Config c;
  c.de.NP = 10;
  c.de.budget = 300;
  c.agent.hidden_layers = 2;
  c.agent.hidden_units = 16;
  c.agent.batch_size = 16;
  c.agent.sync_period = 100;
  c.agent.warmup_size = 200;
  c.agent.memory_capacity = 5000;
  c.max_cycles = 3;
  c.suite.train_functions = {"sphere", "rastrigin"};
  c.suite.test_functions = {"rot_ackley"};
  c.suite.dims = {5};
  return c;
}

// Brute-force average ranks: rank = 1 + #strictly better + (#ties - 1) / 2.
std::vector<double> rank_oracle(const std::vector<std::vector<double>>& v) {
  const std::size_t M = v.size(), P = v[0].size();
  std::vector<double> out(M, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t m = 0; m < M; ++m) {
      double better = 0, ties = 0;
      for (std::size_t o = 0; o < M; ++o) {
        if (v[o][p] < v[m][p]) ++better;
        if (v[o][p] == v[m][p]) ++ties;
      }
      out[m] += 1.0 + better + (ties - 1.0) / 2.0;
    }
  for (auto& x : out) x /= static_cast<double>(P);
  return out;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Rank, SimpleOrdering) {
  const auto r = rank({{1.0, 1.0}, {2.0, 2.0}});
  EXPECT_EQ(r, (std::vector<double>{1.0, 2.0}));
}

TEST(Rank, TiesShareAverage) {
  const auto r = rank({{3.0}, {3.0}, {1.0}});
  EXPECT_EQ(r, (std::vector<double>{2.5, 2.5, 1.0}));
  const auto two = rank({{5.0}, {5.0}});
  EXPECT_EQ(two, (std::vector<double>{1.5, 1.5}));
}

TEST(Rank, MatchesBruteForceAndSumsToConstant) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t M = 2 + rng.below(6), P = 1 + rng.below(8);
    std::vector<std::vector<double>> v(M, std::vector<double>(P));
    // Coarse values so ties are common.
    for (auto& row : v)
      for (auto& x : row) x = static_cast<double>(rng.below(4));
    const auto got = rank(v);
    const auto want = rank_oracle(v);
    double total = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      EXPECT_NEAR(got[m], want[m], 1e-12);
      total += got[m];
    }
    EXPECT_NEAR(total / static_cast<double>(M), (static_cast<double>(M) + 1.0) / 2.0, 1e-12);
  }
}

TEST(Rank, RejectsBadMatrices) {
  EXPECT_THROW(rank({{1.0, 2.0}, {1.0}}), std::invalid_argument);
  EXPECT_THROW(rank({{1.0}, {NAN}}), std::invalid_argument);
}

TEST(Policy, Parsing) {
  EXPECT_EQ(parse_policy("random").kind, PolicySpec::Kind::random_uniform);
  const auto f = parse_policy("fixed:rand2");
  EXPECT_EQ(f.kind, PolicySpec::Kind::fixed);
  EXPECT_EQ(f.strategy, Strategy::rand2);
  EXPECT_EQ(f.name, "DE-rand2");
  EXPECT_EQ(parse_policy("curr_to_rand1").strategy, Strategy::curr_to_rand1);
  const auto d = parse_policy("ddqn:/tmp/agent.bin");
  EXPECT_EQ(d.kind, PolicySpec::Kind::ddqn);
  EXPECT_EQ(d.name, "ddqn-agent");
  EXPECT_THROW(parse_policy("fixed:rand9"), ConfigError);
  EXPECT_THROW(parse_policy("greedy:x"), ConfigError);
  EXPECT_THROW(parse_policy("ddqn:"), ConfigError);
}

TEST(Evaluate, FixedStrategyOnSphere) {
  Config cfg;
  const auto suite = make_suite(std::vector<std::string>{"sphere"}, std::vector<std::size_t>{10});
  const auto policy = parse_policy("fixed:rand1");
  const auto lp = detail::load_policy(policy);
  for (std::size_t r = 0; r < 25; ++r) {
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    const auto [err, evals] = run_policy(lp, suite[0], cfg, derive_seed(4, r), [&](const DeRun& run, Strategy) {
      monotone = monotone && run.run_state().f_bsf <= prev;
      prev = run.run_state().f_bsf;
    });
    EXPECT_TRUE(monotone);
    EXPECT_TRUE(std::isfinite(err));
    EXPECT_GE(err, 0.0);
    EXPECT_LE(evals, cfg.de.budget);
  }
}

TEST(Evaluate, BudgetAccountingAndShape) {
  Config cfg = tiny_config();
  const auto suite = test_suite(cfg.suite);
  const auto res = evaluate({parse_policy("random"), parse_policy("rand1")}, suite, cfg, 3, 11);
  ASSERT_EQ(res.runs.size(), 2u * 1 * 3);
  for (const auto& r : res.runs) {
    // Unless the run hit the optimum early, it uses exactly the budget.
    if (r.final_error > cfg.stop_tolerance) EXPECT_EQ(r.evals_used, cfg.de.budget);
    EXPECT_LE(r.evals_used, cfg.de.budget);
  }
  EXPECT_EQ(res.runs[0].method, "random");
  EXPECT_EQ(res.runs[3].method, "DE-rand1");
  EXPECT_EQ(res.mean_rank.size(), 2u);
}

TEST(Evaluate, StoppingOnTolerance) {
  Config cfg;
  cfg.de.budget = 100000;
  cfg.stop_tolerance = 1e-2;
  const auto suite = make_suite(std::vector<std::string>{"sphere"}, std::vector<std::size_t>{2});
  const auto res = evaluate({parse_policy("rand1")}, suite, cfg, 2, 5);
  for (const auto& r : res.runs) {
    EXPECT_LE(r.final_error, 1e-2);
    EXPECT_LT(r.evals_used, cfg.de.budget);
  }
}

TEST(Evaluate, ReproducibleAndThreadInvariant) {
  Config cfg = tiny_config();
  const auto suite = train_suite(cfg.suite);
  const std::vector<PolicySpec> pols{parse_policy("random"), parse_policy("rand2"), parse_policy("rand_to_best2")};
  const auto a = evaluate(pols, suite, cfg, 4, 9, 1);
  const auto b = evaluate(pols, suite, cfg, 4, 9, 1);
  const auto c = evaluate(pols, suite, cfg, 4, 9, 3);
  std::ostringstream sa, sb, sc;
  write_results_csv(sa, a);
  write_results_csv(sb, b);
  write_results_csv(sc, c);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str(), sc.str());
  const auto d = evaluate(pols, suite, cfg, 4, 10, 1);
  std::ostringstream sd;
  write_results_csv(sd, d);
  EXPECT_NE(sa.str(), sd.str());
}

TEST(Evaluate, RejectsDuplicateNamesAndEmptyInputs) {
  Config cfg = tiny_config();
  const auto suite = test_suite(cfg.suite);
  EXPECT_THROW(evaluate({parse_policy("rand1"), parse_policy("fixed:rand1")}, suite, cfg, 1, 1), ConfigError);
  EXPECT_THROW(evaluate({}, suite, cfg, 1, 1), ConfigError);
  EXPECT_THROW(evaluate({parse_policy("rand1")}, {}, cfg, 1, 1), ConfigError);
  EXPECT_THROW(evaluate({parse_policy("ddqn:/no/such.bin")}, suite, cfg, 1, 1), DataError);
}

TEST(Evaluate, CsvShapes) {
  Config cfg = tiny_config();
  const auto suite = train_suite(cfg.suite);
  const auto res = evaluate({parse_policy("random"), parse_policy("rand1")}, suite, cfg, 3, 1);
  std::ostringstream runs, summary, ranks;
  write_results_csv(runs, res);
  write_summary_csv(summary, res);
  write_ranks_csv(ranks, res);
  auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  EXPECT_EQ(count(runs.str()), 1 + 2 * 2 * 3);
  EXPECT_EQ(count(summary.str()), 1 + 2 * 2);
  EXPECT_EQ(count(ranks.str()), 1 + 2);
  EXPECT_EQ(runs.str().substr(0, runs.str().find('\n')), "method,problem,dim,run,final_error,evals_used");
}

TEST(Train, ZeroCyclesIsAnErrorWithoutCheckpoint) {
  TempDir dir;
  Config cfg = tiny_config();
  cfg.max_cycles = 0;
  const auto ck = dir.path / "agent.bin";
  EXPECT_THROW(train(cfg, {ck, {}, nullptr}), ConfigError);
  EXPECT_FALSE(fs::exists(ck));
}

TEST(Train, UnwritableCheckpointRejectedUpFront) {
  Config cfg = tiny_config();
  EXPECT_THROW(train(cfg, {"/no/such/dir/agent.bin", {}, nullptr}), DataError);
}

TEST(Train, R3NeedsKnownOptimum) {
  TempDir dir;
  Config cfg = tiny_config();
  cfg.reward.kind = RewardKind::r3;
  // Every registered function has a known optimum, so r3 trains.
  EXPECT_NO_THROW(train(cfg, {dir.path / "a.bin", {}, nullptr}));
}

TEST(Train, ProducesCheckpointAndLog) {
  TempDir dir;
  Config cfg = tiny_config();
  const auto ck = dir.path / "agent.bin";
  const auto rep = train(cfg, {ck, {}, nullptr});
  ASSERT_TRUE(fs::exists(ck));
  ASSERT_TRUE(fs::exists(sidecar_path(ck)));
  EXPECT_EQ(rep.cycle_rewards.size(), 3u);
  EXPECT_TRUE(rep.checkpointed[0]);
  EXPECT_EQ(rep.warmup_steps, cfg.agent.warmup_size);
  EXPECT_GE(rep.best_cycle, 1u);
  EXPECT_EQ(rep.best_reward, *std::max_element(rep.cycle_rewards.begin(), rep.cycle_rewards.end()));

  const auto lines = read_lines(dir.path / "agent.bin.log.csv");
  ASSERT_EQ(lines.size(), 2u + 3u);
  EXPECT_EQ(lines[0].rfind("# mean_reward", 0), 0u);
  EXPECT_EQ(lines[1], "cycle,mean_reward,checkpointed");
  EXPECT_EQ(lines[2].rfind("1,", 0), 0u);

  const auto loaded = load_checkpoint(ck);
  EXPECT_EQ(loaded.info.dim_max, 5u);
  EXPECT_EQ(loaded.info.config_hash, config_hash(cfg));
  EXPECT_EQ(loaded.net.sizes(), cfg.agent.layer_sizes());
}

TEST(Train, PatienceStopsEarly) {
  TempDir dir;
  Config cfg = tiny_config();
  cfg.max_cycles = 40;
  cfg.patience = 1;
  const auto rep = train(cfg, {dir.path / "a.bin", {}, nullptr});
  EXPECT_TRUE(rep.stopped_by_patience);
  EXPECT_LT(rep.cycle_rewards.size(), 40u);
  EXPECT_FALSE(rep.checkpointed.back());
}

TEST(Train, DeterministicAndRoundTripsThroughEvaluation) {
  TempDir dir;
  Config cfg = tiny_config();
  // Same file name in both: the evaluation seed includes the policy name.
  fs::create_directories(dir.path / "x");
  fs::create_directories(dir.path / "y");
  const auto a = dir.path / "x" / "a.bin", b = dir.path / "y" / "a.bin";
  const auto ra = train(cfg, {a, {}, nullptr});
  const auto rb = train(cfg, {b, {}, nullptr});
  EXPECT_EQ(ra.cycle_rewards, rb.cycle_rewards);
  EXPECT_EQ(load_weights(a).fingerprint(), load_weights(b).fingerprint());

  const auto suite = test_suite(cfg.suite);
  const auto ea = evaluate({parse_policy("ddqn:" + a.string()), parse_policy("random")}, suite, cfg, 3, 2);
  const auto eb = evaluate({parse_policy("ddqn:" + b.string()), parse_policy("random")}, suite, cfg, 3, 2);
  EXPECT_EQ(ea.methods[0], "ddqn-a");
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(ea.runs[k].final_error, eb.runs[k].final_error);
}

TEST(Train, CheckpointWithoutSidecarRejectedForEvaluation) {
  TempDir dir;
  Config cfg = tiny_config();
  const auto ck = dir.path / "agent.bin";
  save_weights(init_network(cfg.agent.layer_sizes(), 1), ck);
  fs::remove(sidecar_path(ck));
  EXPECT_THROW(evaluate({parse_policy("ddqn:" + ck.string())}, test_suite(cfg.suite), cfg, 1, 1), DataError);
}

TEST(FeaturesDump, RowPerApplication) {
  Config cfg = tiny_config();
  const auto suite = test_suite(cfg.suite);
  std::ostringstream out;
  dump_features(out, parse_policy("random"), suite[0], cfg, 3);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4 + 99);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4 + 99);
  }
  EXPECT_EQ(rows, cfg.de.budget - cfg.de.NP);
}
