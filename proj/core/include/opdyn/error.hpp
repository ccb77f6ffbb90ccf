#pragma once

#include <stdexcept>
#include <string>

namespace opdyn {

// Base for all library errors. The CLI maps ConfigError/FormatError to exit
// status 1 and NumericalError to exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, size mismatches, violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or version-mismatched files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, solver exhaustion, Hermiticity violations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace opdyn
