#pragma once

#include <stdexcept>
#include <string>

namespace htomo {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The input sits on a singularity of the formula being evaluated.
class SingularInput : public Error {
 public:
  using Error::Error;
};

/// An iterative method failed, or the data are too degenerate to proceed.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

enum class FormatErrc {
  bad_magic,
  unsupported_version,
  bad_ndim,
  truncated,
  dim_overflow,
  invalid_value,
  io_failure,
};

const char* to_string(FormatErrc code);

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + what), code_(code) {}
  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

}  // namespace htomo
