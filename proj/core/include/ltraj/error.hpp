#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ltraj {

enum class ErrorCode {
  io,
  bad_magic,
  unsupported_version,
  bad_header,
  truncated,
  non_finite,
  invariant,
  malformed_line,
  duplicate_sample,
  too_few_segments,
  degenerate,
  out_of_range,
  single_class,
  missing_value,
  too_few_problems,
  infeasible,
  config,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-checkable code so
/// callers (and tests) can distinguish e.g. a truncated payload from a bad magic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ltraj
