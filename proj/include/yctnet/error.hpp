#pragma once

#include <stdexcept>
#include <string>

namespace yct {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or volume geometry that violates a documented shape law.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration document; the message names the field and constraint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class IoErrorKind { unreadable, unwritable, malformed_header, size_mismatch, unsupported_dtype };

class IoError : public Error {
 public:
  IoError(IoErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  IoErrorKind kind() const { return kind_; }

 private:
  IoErrorKind kind_;
};

/// Non-finite loss or gradient during optimisation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace yct
