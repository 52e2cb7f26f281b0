#pragma once

#include <stdexcept>
#include <string>

namespace bsbt {

// Bad input: malformed files, violated preconditions, inconsistent shapes.
// The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical or I/O failure after inputs were accepted (exit code 2).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bsbt
