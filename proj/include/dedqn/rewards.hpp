#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dedqn/errors.hpp"

namespace dedqn {

enum class RewardKind { r1, r2, r3 };

struct RewardSpec {
  RewardKind kind = RewardKind::r2;
  double r3_cap = 1e6;  // returned when the trial is within 1e-12 of the optimum
};

inline RewardKind parse_reward_kind(std::string_view s) {
  if (s == "r1" || s == "R1") return RewardKind::r1;
  if (s == "r2" || s == "R2") return RewardKind::r2;
  if (s == "r3" || s == "R3") return RewardKind::r3;
  throw ConfigError("unknown reward kind '" + std::string(s) + "' (expected r1, r2 or r3)");
}

inline std::string_view to_string(RewardKind k) {
  switch (k) {
    case RewardKind::r1: return "r1";
    case RewardKind::r2: return "r2";
    case RewardKind::r3: return "r3";
  }
  return "?";
}

/// Per-application reward. f_bsf is the best-so-far value before this
/// step's selection.
///   R1 = max(f_parent - f_trial, 0)
///   R2 = 10 on a new best-so-far, 1 on beating the parent, else 0
///   R3 = max((f_parent - f_trial) / (f_trial - f_optimum), 0)
inline double reward(const RewardSpec& spec, double f_parent, double f_trial, double f_bsf, double f_optimum) {
  switch (spec.kind) {
    case RewardKind::r1:
      return std::max(f_parent - f_trial, 0.0);
    case RewardKind::r2:
      if (f_trial < f_bsf) return 10.0;
      if (f_trial < f_parent) return 1.0;
      return 0.0;
    case RewardKind::r3: {
      if (!std::isfinite(f_optimum)) throw ConfigError("reward r3 needs a known optimum");
      const double gain = f_parent - f_trial;
      if (!(gain > 0.0)) return 0.0;
      const double gap = f_trial - f_optimum;
      if (gap < 1e-12) return spec.r3_cap;
      return std::min(gain / gap, spec.r3_cap);
    }
  }
  return 0.0;
}

inline double reward(RewardKind kind, double f_parent, double f_trial, double f_bsf, double f_optimum) {
  return reward(RewardSpec{kind}, f_parent, f_trial, f_bsf, f_optimum);
}

}  // namespace dedqn
