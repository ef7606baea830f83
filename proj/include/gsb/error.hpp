#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gsb {

enum class ErrorCode {
  NotPsd,
  SingularCovariance,
  SingularMarginal,
  TimeOutOfRange,
  DegenerateHorizon,
  InvalidParams,
  QuadratureFailure,
  DivergedSimulation,
  DimensionMismatch,
  DimensionTooLarge,
  NonFiniteLoss,
  TooFewPoints,
  MomentEstimationFailure,
  ConfigError,
  IoError,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::SingularMarginal: return "SingularMarginal";
    case ErrorCode::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorCode::DegenerateHorizon: return "DegenerateHorizon";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::DivergedSimulation: return "DivergedSimulation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::MomentEstimationFailure: return "MomentEstimationFailure";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Process exit code used by the command-line tool for each error family.
constexpr int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidParams:
      return 2;
    case ErrorCode::IoError:
      return 4;
    default:
      return 3;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gsb
