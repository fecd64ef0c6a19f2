#pragma once

#include <stdexcept>
#include <string>

namespace ema {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class AxisError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters (group count, reduction ratio, training config).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class TapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones were required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed files: CIFAR records, parameter containers.
class FormatError : public Error {
 public:
  using Error::Error;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

}  // namespace ema
