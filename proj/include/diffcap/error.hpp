#pragma once

#include <stdexcept>
#include <string>

namespace diffcap {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (bad sizes, inconsistent dims).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape mismatch or out-of-range index.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input file.
class LoadError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace diffcap
