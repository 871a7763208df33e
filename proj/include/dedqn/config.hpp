#pragma once

// Key-value run configuration.
//
//   # comment
//   key = value
//
// Lists are comma separated. Every key has a default; unknown keys are
// rejected. to_text() emits the canonical form that config_hash() digests.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dedqn/bench.hpp"
#include "dedqn/ddqn.hpp"
#include "dedqn/de_env.hpp"
#include "dedqn/errors.hpp"
#include "dedqn/rewards.hpp"

namespace dedqn {

struct Config {
  DeParams de;
  std::size_t history_generations = 10;
  std::size_t window_size = 50;
  double stop_tolerance = 1e-8;
  AgentConfig agent;
  RewardSpec reward;
  SuiteConfig suite;
  std::uint64_t seed = 1;
  std::size_t max_cycles = 2000;
  std::size_t patience = 50;
  std::size_t runs = 25;
  std::size_t jobs = 1;

  EnvConfig env(std::size_t dim_max) const {
    EnvConfig e;
    e.de = de;
    e.history_generations = history_generations;
    e.window_size = window_size;
    e.dim_max = dim_max;
    e.stop_tolerance = stop_tolerance;
    return e;
  }

  void validate() const {
    try {
      de.validate();
      agent.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    suite.validate();
    if (history_generations == 0) throw ConfigError("gen must be positive");
    if (window_size == 0) throw ConfigError("window must be positive");
    if (runs == 0) throw ConfigError("runs must be positive");
    if (jobs == 0) throw ConfigError("jobs must be positive");
    if (!(stop_tolerance >= 0.0)) throw ConfigError("stop_tolerance must be non-negative");
    if (!(reward.r3_cap > 0.0)) throw ConfigError("r3_cap must be positive");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': not a real number: '" + v + "'");
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  if (!v.empty() && v.find_first_not_of("0123456789") == std::string::npos) {
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
    }
  }
  // Allow 1e4-style integers.
  const double d = parse_real(key, v);
  if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
  throw ConfigError("config key '" + key + "': not a non-negative integer: '" + v + "'");
}

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::ostringstream os;
  for (std::size_t k = 0; k < items.size(); ++k) os << (k ? "," : "") << items[k];
  return os.str();
}

}  // namespace detail

namespace detail {

struct KeyHandler {
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

inline const std::map<std::string, KeyHandler>& config_keys() {
  static const std::map<std::string, KeyHandler> keys = [] {
    std::map<std::string, KeyHandler> k;
    auto add_real = [&k](std::string name, std::function<double&(Config&)> ref) {
      k[name] = {[name, ref](Config& c, const std::string& v) { ref(c) = parse_real(name, v); },
                 [ref](const Config& c) { return format_real(ref(const_cast<Config&>(c))); }};
    };
    auto add_count = [&k](std::string name, std::function<std::size_t&(Config&)> ref) {
      k[name] = {[name, ref](Config& c, const std::string& v) { ref(c) = static_cast<std::size_t>(parse_count(name, v)); },
                 [ref](const Config& c) { return std::to_string(ref(const_cast<Config&>(c))); }};
    };
    add_real("F", [](Config& c) -> double& { return c.de.F; });
    add_real("CR", [](Config& c) -> double& { return c.de.CR; });
    add_count("NP", [](Config& c) -> std::size_t& { return c.de.NP; });
    add_count("fe_max", [](Config& c) -> std::size_t& { return c.de.budget; });
    add_count("gen", [](Config& c) -> std::size_t& { return c.history_generations; });
    add_count("window", [](Config& c) -> std::size_t& { return c.window_size; });
    add_real("stop_tolerance", [](Config& c) -> double& { return c.stop_tolerance; });
    add_count("hidden_layers", [](Config& c) -> std::size_t& { return c.agent.hidden_layers; });
    add_count("hidden_units", [](Config& c) -> std::size_t& { return c.agent.hidden_units; });
    add_count("batch_size", [](Config& c) -> std::size_t& { return c.agent.batch_size; });
    add_real("epsilon", [](Config& c) -> double& { return c.agent.epsilon; });
    add_real("gamma", [](Config& c) -> double& { return c.agent.gamma; });
    add_count("sync_period", [](Config& c) -> std::size_t& { return c.agent.sync_period; });
    add_count("memory_capacity", [](Config& c) -> std::size_t& { return c.agent.memory_capacity; });
    add_count("warmup_size", [](Config& c) -> std::size_t& { return c.agent.warmup_size; });
    add_real("learning_rate", [](Config& c) -> double& { return c.agent.adam.learning_rate; });
    add_real("adam_beta1", [](Config& c) -> double& { return c.agent.adam.beta1; });
    add_real("adam_beta2", [](Config& c) -> double& { return c.agent.adam.beta2; });
    add_real("adam_epsilon", [](Config& c) -> double& { return c.agent.adam.epsilon; });
    add_real("grad_clip_norm", [](Config& c) -> double& { return c.agent.grad_clip_norm; });
    add_real("r3_cap", [](Config& c) -> double& { return c.reward.r3_cap; });
    add_count("max_cycles", [](Config& c) -> std::size_t& { return c.max_cycles; });
    add_count("patience", [](Config& c) -> std::size_t& { return c.patience; });
    add_count("runs", [](Config& c) -> std::size_t& { return c.runs; });
    add_count("jobs", [](Config& c) -> std::size_t& { return c.jobs; });

    k["reward"] = {[](Config& c, const std::string& v) { c.reward.kind = parse_reward_kind(v); },
                   [](const Config& c) { return std::string(to_string(c.reward.kind)); }};
    k["normalize_rewards"] = {[](Config& c, const std::string& v) {
                                if (v == "true" || v == "1" || v == "on")
                                  c.agent.normalize_rewards = true;
                                else if (v == "false" || v == "0" || v == "off")
                                  c.agent.normalize_rewards = false;
                                else
                                  throw ConfigError("config key 'normalize_rewards': expected true or false, got '" + v + "'");
                              },
                              [](const Config& c) { return std::string(c.agent.normalize_rewards ? "true" : "false"); }};
    k["seed"] = {[](Config& c, const std::string& v) { c.seed = parse_count("seed", v); },
                 [](const Config& c) { return std::to_string(c.seed); }};
    k["train_functions"] = {[](Config& c, const std::string& v) { c.suite.train_functions = split_list(v); },
                            [](const Config& c) { return join(c.suite.train_functions); }};
    k["test_functions"] = {[](Config& c, const std::string& v) { c.suite.test_functions = split_list(v); },
                           [](const Config& c) { return join(c.suite.test_functions); }};
    k["dims"] = {[](Config& c, const std::string& v) {
                   c.suite.dims.clear();
                   for (const auto& d : split_list(v)) c.suite.dims.push_back(static_cast<std::size_t>(parse_count("dims", d)));
                 },
                 [](const Config& c) { return join(c.suite.dims); }};
    k["transform_dir"] = {[](Config& c, const std::string& v) {
                            if (v.empty())
                              c.suite.transform_dir.reset();
                            else
                              c.suite.transform_dir = std::filesystem::path(v);
                          },
                          [](const Config& c) { return c.suite.transform_dir ? c.suite.transform_dir->string() : std::string{}; }};
    return k;
  }();
  return keys;
}

}  // namespace detail

/// Applies one key to the configuration; unknown keys are an error.
inline void set_config_value(Config& cfg, const std::string& key, const std::string& value) {
  const auto& keys = detail::config_keys();
  const auto it = keys.find(key);
  if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

inline Config parse_config(std::string_view text, const std::string& source = "<config>") {
  Config cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = detail::trim(std::string_view(body).substr(0, eq));
    const auto value = detail::trim(std::string_view(body).substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

/// Canonical text: every key, sorted, one per line.
inline std::string to_text(const Config& cfg) {
  std::string out;
  for (const auto& [key, handler] : detail::config_keys()) out += key + " = " + handler.get(cfg) + "\n";
  return out;
}

inline std::string config_hash(const Config& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_text(cfg))));
  return buf;
}

}  // namespace dedqn
