#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uniasr {

enum class ErrorCode {
  InvalidArgument,
  InvalidAlignment,
  InvalidSpans,
  OverlappingSpans,
  MultiCharCjkToken,
  DimensionMismatch,
  ContextOverflow,
  RollbackPastChunkBoundary,
  ImmutabilityViolation,
  StepBeyondSequence,
  ConfigMismatch,
  PushAfterFinish,
  Io,
  Parse,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidAlignment: return "InvalidAlignment";
    case ErrorCode::InvalidSpans: return "InvalidSpans";
    case ErrorCode::OverlappingSpans: return "OverlappingSpans";
    case ErrorCode::MultiCharCjkToken: return "MultiCharCjkToken";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::RollbackPastChunkBoundary: return "RollbackPastChunkBoundary";
    case ErrorCode::ImmutabilityViolation: return "ImmutabilityViolation";
    case ErrorCode::StepBeyondSequence: return "StepBeyondSequence";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::PushAfterFinish: return "PushAfterFinish";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace uniasr
