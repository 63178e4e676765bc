#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace missurv {

// Stable, machine-readable failure codes. The CLI prints code_name() verbatim,
// so existing names must never change.
enum class ErrorCode {
  EmptyDataset,
  DimensionMismatch,
  NonFiniteValue,
  NegativeTime,
  StatusTypeMismatch,
  UnknownStatusInFullData,
  UnknownStatusPresent,
  EmptyRiskSetAtEvent,
  RhoZero,
  RhoDegenerate,
  NoEvents,
  NoCompleteEvents,
  NoEventsBeforeT,
  SingularJacobian,
  SingularBread,
  SingularV2,
  MaxIterations,
  ZeroVariance,
  MissingD,
  NoDeaths,
  TauDegenerate,
  TargetUnreachable,
  TooManyFailures,
  InvalidArgument,
  ParseError,
  IoError,
};

constexpr std::string_view code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NegativeTime: return "NegativeTime";
    case ErrorCode::StatusTypeMismatch: return "StatusTypeMismatch";
    case ErrorCode::UnknownStatusInFullData: return "UnknownStatusInFullData";
    case ErrorCode::UnknownStatusPresent: return "UnknownStatusPresent";
    case ErrorCode::EmptyRiskSetAtEvent: return "EmptyRiskSetAtEvent";
    case ErrorCode::RhoZero: return "RhoZero";
    case ErrorCode::RhoDegenerate: return "RhoDegenerate";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::NoCompleteEvents: return "NoCompleteEvents";
    case ErrorCode::NoEventsBeforeT: return "NoEventsBeforeT";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::SingularBread: return "SingularBread";
    case ErrorCode::SingularV2: return "SingularV2";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::MissingD: return "MissingD";
    case ErrorCode::NoDeaths: return "NoDeaths";
    case ErrorCode::TauDegenerate: return "TauDegenerate";
    case ErrorCode::TargetUnreachable: return "TargetUnreachable";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Numerical/solver failures as opposed to bad input. The CLI maps these to
// exit status 2, everything else to 1.
constexpr bool is_solver_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::SingularJacobian:
    case ErrorCode::SingularBread:
    case ErrorCode::SingularV2:
    case ErrorCode::MaxIterations:
    case ErrorCode::TooManyFailures:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace missurv
