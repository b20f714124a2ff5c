#pragma once

#include <stdexcept>
#include <string>

namespace jiang {

// Shapes that cannot be combined by an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced or consumed, or a division by a near-zero value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: backward on a non-scalar, consumed graph, bad config values.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed files or failed reads/writes.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jiang
