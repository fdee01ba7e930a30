#pragma once

#include <stdexcept>
#include <string>

namespace irf {

/// Raised when a caller breaks an operation's precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised on incompatible tensor shapes; the message carries both shapes.
class ShapeError : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

/// Raised when a computation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on malformed configuration or files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void expects(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace irf
