#pragma once

#include <stdexcept>
#include <string>

namespace svls {

enum class ErrorKind {
  invalid_argument,  // bad parameter value (alpha, sigma, rank, ...)
  shape_mismatch,    // operands disagree in extents, spacing or class count
  validation,        // data violates a type invariant
  format,            // malformed file container
  io                 // filesystem failure
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::validation: return "validation";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Single exception type for the library. `field()` names the offending
/// header field, parameter or voxel when one is known.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string field, const std::string& message)
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string field, const std::string& message) {
  throw Error(kind, std::move(field), message);
}

inline void require(bool condition, ErrorKind kind, const char* field, const std::string& message) {
  if (!condition) fail(kind, field, message);
}

}  // namespace svls
