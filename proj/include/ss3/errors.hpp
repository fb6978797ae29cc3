#pragma once

#include <stdexcept>
#include <string>

namespace ss3 {

// Bad arguments or malformed input files. Maps to exit code 2 in the CLI.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Numerical breakdown (non-finite iterates, failed bags, no bracket). Exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ss3
