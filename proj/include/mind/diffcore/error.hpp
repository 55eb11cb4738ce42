#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mind {

enum class ErrorCode {
  shape_mismatch,
  unbound_leaf,
  non_scalar_output,
  non_finite,
  invalid_argument,
  out_of_range,
  numerical,
  parse,
  io,
  infeasible,
  precondition,
};

std::string_view to_string(ErrorCode code) noexcept;

// All library failures are reported through this type; `code()` is what the
// CLI serializes into its structured error output.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace mind
