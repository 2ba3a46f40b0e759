#pragma once

#include <stdexcept>
#include <string>

namespace avsf {

enum class ErrorKind {
  io,
  bad_magic,
  unsupported_version,
  truncated,
  non_finite,
  format,
  unsupported_format,
  invalid_argument,
  dimension_mismatch,
  divergence,
};

const char* to_string(ErrorKind kind);

// Every failure the library reports carries a kind so callers (and tests)
// can tell malformed input apart from I/O trouble without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace avsf
