#include "kestrel/error.hpp"

namespace kestrel {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::UnknownEvidenceKind: return "UnknownEvidenceKind";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ImageDecodeError: return "ImageDecodeError";
    case ErrorCode::NoInstances: return "NoInstances";
    case ErrorCode::MissingScope: return "MissingScope";
    case ErrorCode::EmptyChecks: return "EmptyChecks";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::CacheMiss: return "CacheMiss";
    case ErrorCode::ScriptMismatch: return "ScriptMismatch";
    case ErrorCode::ScriptExhausted: return "ScriptExhausted";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace kestrel
