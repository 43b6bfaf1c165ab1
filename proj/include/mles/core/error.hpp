#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mles {

enum class ErrorCode {
  EmptyCode,
  SequenceGap,
  EmptyPool,
  UnevaluatedCandidate,
  InvalidArgument,
  ArityMismatch,
  MissingIBE,
  MissingThought,
  MissingCode,
  MissingSection,
  InvalidEntryPoint,
  BudgetExhausted,
  EndpointFailure,
  ImageUnsupported,
  DomainError,
  MixedTask,
  EvaluatorCrashed,
  Timeout,
  AggregateMismatch,
  ProtocolError,
  AllSeedsFailed,
  SchemaMismatch,
  CorruptCheckpoint,
  ConfigError,
  EvaluatorUnavailable,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyCode: return "EmptyCode";
    case ErrorCode::SequenceGap: return "SequenceGap";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::UnevaluatedCandidate: return "UnevaluatedCandidate";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::MissingIBE: return "MissingIBE";
    case ErrorCode::MissingThought: return "MissingThought";
    case ErrorCode::MissingCode: return "MissingCode";
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::InvalidEntryPoint: return "InvalidEntryPoint";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::EndpointFailure: return "EndpointFailure";
    case ErrorCode::ImageUnsupported: return "ImageUnsupported";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::MixedTask: return "MixedTask";
    case ErrorCode::EvaluatorCrashed: return "EvaluatorCrashed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::AggregateMismatch: return "AggregateMismatch";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::AllSeedsFailed: return "AllSeedsFailed";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::EvaluatorUnavailable: return "EvaluatorUnavailable";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a stable code so callers can
/// branch on it without matching message text.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) { throw Error(code, detail); }

} // namespace mles
