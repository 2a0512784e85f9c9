#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace skintone {

/// Malformed or out-of-range input in an ingested file. `row` is 1-based and
/// counts the header, so it matches what an editor shows; 0 means "no row".
class InputError : public std::runtime_error {
 public:
  enum class Kind { malformed, range, duplicate, schema, join, missing };

  InputError(Kind kind, std::size_t row, const std::string& what)
      : std::runtime_error(row ? "row " + std::to_string(row) + ": " + what : what),
        kind_(kind),
        row_(row) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t row() const noexcept { return row_; }

 private:
  Kind kind_;
  std::size_t row_;
};

/// Design matrix without full column rank. Carries the offending columns.
class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(const std::string& what, std::vector<std::string> columns)
      : std::runtime_error(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Logistic fit whose coefficients diverge because the classes are separable.
class SeparationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace skintone
