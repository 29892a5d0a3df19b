#pragma once

#include <stdexcept>
#include <string>

namespace eqrec {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (mesh, measurements, config). Carries a line number
// when one is known.
class ParseError : public Error {
public:
  ParseError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

// Structurally valid input that violates a domain invariant
// (non-positive triangle area, sigma <= 0, probe off the boundary, ...).
class DataError : public Error {
public:
  using Error::Error;
};

// Numerical failure: singular factorization, divergent iteration,
// unphysical intermediate value.
class NumericalError : public Error {
public:
  using Error::Error;
};

}  // namespace eqrec
