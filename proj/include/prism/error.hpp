#pragma once

#include <stdexcept>
#include <string>

namespace prism {

/// Root of every error the library throws. Each subclass maps to one failure
/// class so callers (the CLI in particular) can pick an exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition on caller-supplied values.
class InputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, gradient or parameter.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that breaks a structural invariant (shapes, label range).
class SchemaError : public Error {
 public:
  using Error::Error;
};

class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// Exhaustive search requested beyond its enumeration bound.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A metric could not be computed from the data given (e.g. no class usable).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

}  // namespace prism
