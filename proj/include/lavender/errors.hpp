#pragma once

#include <stdexcept>
#include <string>

namespace lavender {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/extent mismatches between tensors or between data and config.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or usage (maps to CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (bad file, bad sentence, out-of-range id).
class InputError : public Error {
 public:
  using Error::Error;
};

// Numeric failure such as NaN loss (maps to CLI exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lavender
