#pragma once

#include <stdexcept>
#include <string>

namespace resmotion {

// Shape or extent mismatch between tensors, or a layer configuration that
// cannot be applied to the given input.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable or inconsistent data on disk (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary file with a bad magic, truncated payload or wrong dtype.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite loss or another numerical breakdown (CLI exit code 4).
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::string snapshot = {})
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}

  // JSON text describing the state at the point of failure.
  const std::string& snapshot() const noexcept { return snapshot_; }

 private:
  std::string snapshot_;
};

}  // namespace resmotion
