#pragma once

#include <stdexcept>
#include <string>

namespace misspec {

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable file, missing path, failed write.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data. row and column are 1-based; 0 means "not applicable".
class DataError : public std::runtime_error {
 public:
  enum class Kind { Empty, Ragged, NonNumeric, Shape };

  DataError(Kind kind, long row, long column, const std::string& what)
      : std::runtime_error(what), kind_(kind), row_(row), column_(column) {}

  Kind kind() const { return kind_; }
  long row() const { return row_; }
  long column() const { return column_; }

 private:
  Kind kind_;
  long row_;
  long column_;
};

/// Evaluation of a Lagrangian at a point outside the domain of f or h.
class InfeasiblePointError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace misspec
