// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace semcc {

/// Error categories. The numeric values double as CLI / C API exit codes.
enum class ErrorKind : int {
  kInternal = 1,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Shape disagreements between operands. Reported as configuration errors at
// the process boundary since they always come from a mismatched setup.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorKind::kConfig, "dimension error: " + what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, "configuration error: " + what) {}
};

// Caller violated an API precondition (non-scalar loss, empty candidate set...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::kInternal, "contract error: " + what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, "data error: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, "numeric error: " + what) {}
};

}  // namespace semcc
