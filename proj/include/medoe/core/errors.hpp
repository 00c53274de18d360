#pragma once

#include <stdexcept>
#include <string>

namespace medoe {

// Invalid or inconsistent configuration (missing fields, dimension mismatches, missing checkpoints).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or violated support conditions inside numeric primitives.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Out-of-range arguments use std::invalid_argument / std::out_of_range directly.

}  // namespace medoe
