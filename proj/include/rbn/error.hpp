#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rbn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model text. Carries the 1-based source position.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t line, std::size_t column)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Semantically invalid model: undeclared names, arity mismatches, bad scoping.
class ModelError : public Error {
 public:
  using Error::Error;
};

// Formula evaluation failed (value out of range, empty mean, ...).
class EvaluationError : public ModelError {
 public:
  using ModelError::ModelError;
};

// Malformed or inconsistent relational data.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rbn
