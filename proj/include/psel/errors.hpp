#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace psel {

/// Typed failure categories. The CLI maps input-style codes to exit status 2
/// and numerical ones to exit status 3.
enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NonRegularFamily,
  UnsupportedAnalytic,
  UnsupportedClosedForm,
  SingularPsfim,
  SingularHessian,
  ZeroFrequency,
  InformationDominanceViolated,
  Degenerate,
  FixedPointNotBracketed,
  EstimatorFailureRate,
  UnknownPreset,
};

std::string_view error_name(ErrorCode code);

/// True for codes that describe malformed input rather than a numerical failure.
bool is_input_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace psel
