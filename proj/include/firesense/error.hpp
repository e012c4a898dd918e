#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace firesense {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or raster dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (bad widths, out-of-range hyperparameters, unknown keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated binary file. Carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// NaN/Inf encountered in values, gradients or losses.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward() on a non-scalar tensor.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace firesense
