#pragma once

#include <stdexcept>
#include <string>

namespace soel {

// Non-finite numeric input where a finite value is required.
struct InvalidValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent configuration (including bad rule files and flags).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dataset cannot satisfy a request (too few classes or samples, missing files).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace soel

namespace soel {

// Learning-rule definition problem: parse failure or a reference to a variable
// the execution context does not bind.
struct RuleError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace soel
