#include "psel/errors.hpp"

namespace psel {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonRegularFamily: return "NonRegularFamily";
    case ErrorCode::UnsupportedAnalytic: return "UnsupportedAnalytic";
    case ErrorCode::UnsupportedClosedForm: return "UnsupportedClosedForm";
    case ErrorCode::SingularPsfim: return "SingularPsfim";
    case ErrorCode::SingularHessian: return "SingularHessian";
    case ErrorCode::ZeroFrequency: return "ZeroFrequency";
    case ErrorCode::InformationDominanceViolated: return "InformationDominanceViolated";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::FixedPointNotBracketed: return "FixedPointNotBracketed";
    case ErrorCode::EstimatorFailureRate: return "EstimatorFailureRate";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
  }
  return "Unknown";
}

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::UnknownPreset:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace psel
