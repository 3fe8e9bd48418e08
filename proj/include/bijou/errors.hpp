#pragma once

#include <stdexcept>
#include <string>

namespace bijou {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid hyperparameters or module configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or out-of-range user input (token ids, short audio, bad text).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable or corrupt files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values reached a place that requires finite ones.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated an API precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace bijou
