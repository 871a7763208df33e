#pragma once

#include <stdexcept>
#include <string>

namespace dedqn {

/// Bad configuration: unknown keys, invalid values, inconsistent suites.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or mismatched input data (transform files, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dedqn
