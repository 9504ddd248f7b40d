#pragma once

#include <stdexcept>
#include <string>

namespace pgpr {

// Numerical failure: every jitter level was exhausted without a successful
// factorization.
struct FactorizationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreements between matrices/vectors that should conform.
struct DimMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Objective configuration outside its valid range.
struct InvalidGamma : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dense-path guard for the exact / FITC marginals.
struct SizeLimitExceeded : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A metric that needs a strictly positive predictive variance got zero or
// less.
struct NonpositiveVariance : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// CSV loading errors.
struct ParseError : std::runtime_error {
  ParseError(std::size_t row, std::size_t col, const std::string& what_cell)
      : std::runtime_error("parse error at row " + std::to_string(row) +
                           ", column " + std::to_string(col) + ": " + what_cell),
        row(row), col(col) {}
  std::size_t row;
  std::size_t col;
};

struct MissingColumn : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint version string did not match.
struct VersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (CLI / config file level).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimizer hit a non-finite objective or gradient.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pgpr
