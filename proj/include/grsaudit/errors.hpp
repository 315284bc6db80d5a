#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace grsaudit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid matrix or list dimensions (too few users, k larger than item count).
struct DimensionError : Error {
  using Error::Error;
};

// Malformed scenario table. row/column name the offending cell when known.
struct ParseError : Error {
  std::string row;
  std::string column;
  ParseError(const std::string& message, std::string row_ = {}, std::string column_ = {})
      : Error(message), row(std::move(row_)), column(std::move(column_)) {}
};

// Input that violates a precondition of a scoring routine.
struct ValidationError : Error {
  using Error::Error;
};

// A statistic that is undefined for the given population
// (zero variance, all-zero reference gains, degenerate kappa marginals).
struct DegenerateError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct TransportError : Error {
  int last_status = 0;
  TransportError(const std::string& message, int status) : Error(message), last_status(status) {}
};

struct RunAborted : Error {
  std::vector<std::string> missing_keys;
  RunAborted(const std::string& message, std::vector<std::string> keys)
      : Error(message), missing_keys(std::move(keys)) {}
};

}  // namespace grsaudit
