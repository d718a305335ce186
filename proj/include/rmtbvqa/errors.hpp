#pragma once

#include <stdexcept>
#include <string>

namespace rmtbvqa {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced by a forward op or a loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file, CSV row, or config entry.
class FormatError : public Error {
 public:
  using Error::Error;
};

// External metric tool failed, timed out, or printed nothing parseable.
class ToolError : public Error {
 public:
  ToolError(const std::string& what, std::string output)
      : Error(what), output_(std::move(output)) {}
  const std::string& output() const noexcept { return output_; }

 private:
  std::string output_;
};

// Operation called with arguments violating its contract.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace rmtbvqa
