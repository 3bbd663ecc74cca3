#pragma once

#include <stdexcept>
#include <string>

namespace blocklink {

// Shape disagreements between tensors. Messages name both shapes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Violated precondition (bad argument value, empty segment, missing coverage).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Lookup of an unknown parameter or gradient name.
struct KeyError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad user-facing configuration or command usage. CLI exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable or unwritable file. CLI exit code 2.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file content; message carries the line number. CLI exit code 2.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss, divergence, failed numeric check. CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exhausted candidate space during negative sampling. CLI exit code 3.
struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace blocklink
