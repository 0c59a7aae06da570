#pragma once

#include <stdexcept>
#include <string>

namespace pstae {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Invalid shapes, hyperparameters or layer plans.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

/// API misuse: backward from a non-scalar, stepping a frozen parameter, ...
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

/// Non-finite values encountered during evaluation.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

/// Malformed or unreadable files.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

/// Data-level problems: empty training sets, single-class labels, ...
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data", what) {}
};

}  // namespace pstae
