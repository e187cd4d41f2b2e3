#pragma once

#include <stdexcept>
#include <string>

namespace embercap {

/// Base class for all embercap errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file. Carries a 1-based line number when known (0 otherwise).
class ParseError : public Error {
public:
  ParseError(const std::string& msg, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

/// Violated precondition or inconsistent configuration.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// An iterative solver failed to reach its tolerance.
class ConvergenceError : public Error {
public:
  using Error::Error;
};

}  // namespace embercap
