#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace v2r {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad sigma, even kernel, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Geometry that cannot support the requested construction: collinear
/// corners, singular matrices, points at infinity.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text or binary data. `offset` is the byte position where
/// parsing stopped (or the 1-based line number for line-oriented formats).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset,
             const char* unit = "byte")
      : Error(what + " (at " + unit + " " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace v2r
