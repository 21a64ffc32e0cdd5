#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pkan {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible (broadcasting, matmul, reshape).
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, const std::string& lhs, const std::string& rhs)
      : Error(op + ": incompatible shapes " + lhs + " and " + rhs), op_(op), lhs_(lhs), rhs_(rhs) {}

  const std::string& op() const noexcept { return op_; }
  const std::string& lhs_shape() const noexcept { return lhs_; }
  const std::string& rhs_shape() const noexcept { return rhs_; }

 private:
  std::string op_;
  std::string lhs_;
  std::string rhs_;
};

/// An operand lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  DomainError(const std::string& op, std::size_t operand, std::size_t element, double value)
      : Error(op + ": operand " + std::to_string(operand) + " element " + std::to_string(element) +
              " = " + std::to_string(value) + " is outside the domain"),
        op_(op),
        operand_(operand),
        element_(element) {}

  const std::string& op() const noexcept { return op_; }
  std::size_t operand() const noexcept { return operand_; }
  std::size_t element() const noexcept { return element_; }

 private:
  std::string op_;
  std::size_t operand_;
  std::size_t element_;
};

/// Invalid configuration or argument supplied by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input data. `row` is 1-based counting the header line, 0 when not tied to a row.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::size_t row = 0)
      : Error(row == 0 ? what : "row " + std::to_string(row) + ": " + what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Corrupt or incompatible serialized model.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A forward pass produced a non-finite value.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& where, std::size_t index)
      : Error("non-finite value in " + where + " " + std::to_string(index)), index_(index) {}

  /// Layer index (for predictions) or window index (for losses).
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace pkan
