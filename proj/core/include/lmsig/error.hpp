#pragma once

#include <stdexcept>
#include <string>

namespace lmsig {

/// Malformed or inconsistent input data (bad values, mismatched shapes,
/// missing files). The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or usage. The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lmsig
