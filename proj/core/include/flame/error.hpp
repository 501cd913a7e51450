#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flame {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value or document violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed input text. byte_offset points at the first offending byte.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset);

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// A regression could not be carried out (underdetermined, rank deficient,
// zero variance, missing estimator).
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace flame
