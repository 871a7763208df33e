// dedqn: train, evaluate and inspect DE strategy-selection policies.
//
// Exit codes: 0 success, 1 usage error, 2 config/data error, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dedqn/bench.hpp"
#include "dedqn/config.hpp"
#include "dedqn/errors.hpp"
#include "dedqn/harness.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dedqn;

Config load(const std::string& path, const std::vector<std::string>& overrides) {
  Config cfg = load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  return out;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  auto stem = p;
  if (stem.extension() == ".csv") stem.replace_extension();
  stem += suffix;
  return stem;
}

std::vector<ObjectiveFunction> pick_suite(const Config& cfg, const std::string& which) {
  if (which == "test") return test_suite(cfg.suite);
  if (which == "train") return train_suite(cfg.suite);
  throw ConfigError("--suite must be 'test' or 'train'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DE with double-DQN mutation-strategy selection"};
  app.require_subcommand(1);

  std::string config_path, out_path, log_path, suite_name = "test", problem_id;
  std::vector<std::string> overrides, policy_texts;
  std::size_t runs = 0, jobs = 0;
  std::uint64_t seed = 0;
  bool quiet = false;

  auto* train_cmd = app.add_subcommand("train", "offline training; writes a checkpoint, its sidecar and a log");
  train_cmd->add_option("--config", config_path, "key-value config file")->required();
  train_cmd->add_option("--out", out_path, "checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "training log CSV (default <out>.log.csv)");
  train_cmd->add_option("--set", overrides, "override a config key: key=value");
  train_cmd->add_flag("--quiet", quiet, "no progress on stderr");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate policies; writes results, summary and rank CSVs");
  eval_cmd->add_option("--config", config_path, "key-value config file")->required();
  eval_cmd->add_option("--policy", policy_texts, "fixed:<strategy> | random | ddqn:<checkpoint>")->required();
  eval_cmd->add_option("--runs", runs, "runs per problem (default: config 'runs')");
  eval_cmd->add_option("--seed", seed, "master seed (default: config 'seed')");
  eval_cmd->add_option("--out", out_path, "results CSV")->required();
  eval_cmd->add_option("--jobs", jobs, "worker threads (default: config 'jobs')");
  eval_cmd->add_option("--suite", suite_name, "test or train problems")->capture_default_str();
  eval_cmd->add_option("--set", overrides, "override a config key: key=value");

  auto* dump_cmd = app.add_subcommand("features-dump", "per-step 99-feature audit trace as CSV");
  dump_cmd->add_option("--config", config_path, "key-value config file")->required();
  dump_cmd->add_option("--out", out_path, "trace CSV")->required();
  dump_cmd->add_option("--problem", problem_id, "problem id such as sphere-10 (default: every problem)");
  dump_cmd->add_option("--policy", policy_texts, "policy driving the run (default random)")->expected(1);
  dump_cmd->add_option("--seed", seed, "master seed (default: config 'seed')");
  dump_cmd->add_option("--suite", suite_name, "test or train problems")->capture_default_str();
  dump_cmd->add_option("--set", overrides, "override a config key: key=value");

  auto* list_cmd = app.add_subcommand("bench-list", "list the benchmark functions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*list_cmd) {
      const auto train_ids = default_train_functions();
      std::cout << "id,class,lower,upper,default_set\n";
      for (const auto& b : registry())
        std::cout << b.id << ',' << to_string(b.cls) << ',' << b.lower << ',' << b.upper << ','
                  << (b.default_train ? "train" : "test") << '\n';
      return 0;
    }

    const Config cfg = load(config_path, overrides);

    if (*train_cmd) {
      TrainOptions opt;
      opt.checkpoint = out_path;
      if (!log_path.empty()) opt.log = fs::path(log_path);
      opt.progress = quiet ? nullptr : &std::cerr;
      const auto rep = train(cfg, opt);
      std::cerr << "trained " << rep.cycle_rewards.size() << " cycles; best cycle " << rep.best_cycle
                << " (mean reward " << rep.best_reward << "); " << rep.total_evaluations
                << " evaluations; checkpoint " << rep.checkpoint.string() << "\n";
      return 0;
    }

    if (*eval_cmd) {
      std::vector<PolicySpec> policies;
      for (const auto& t : policy_texts) policies.push_back(parse_policy(t));
      const auto suite = pick_suite(cfg, suite_name);
      const auto res = evaluate(policies, suite, cfg, runs ? runs : cfg.runs, eval_cmd->count("--seed") ? seed : cfg.seed,
                                jobs ? jobs : cfg.jobs);
      const fs::path out(out_path);
      {
        auto f = open_out(out);
        write_results_csv(f, res);
      }
      {
        auto f = open_out(with_suffix(out, ".summary.csv"));
        write_summary_csv(f, res);
      }
      {
        auto f = open_out(with_suffix(out, ".ranks.csv"));
        write_ranks_csv(f, res);
      }
      write_ranks_csv(std::cout, res);
      return 0;
    }

    if (*dump_cmd) {
      const PolicySpec policy = parse_policy(policy_texts.empty() ? "random" : policy_texts.front());
      const auto suite = pick_suite(cfg, suite_name);
      const std::uint64_t master = dump_cmd->count("--seed") ? seed : cfg.seed;
      auto out = open_out(out_path);
      bool header = true, found = false;
      for (const auto& f : suite) {
        if (!problem_id.empty() && f.id() != problem_id) continue;
        found = true;
        dump_features(out, policy, f, cfg, derive_seed(master, "features-dump", f.id()), 0, header);
        header = false;
      }
      if (!found) throw ConfigError("no problem '" + problem_id + "' in the " + suite_name + " suite");
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
