#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kestrel {

enum class ErrorCode {
  InvalidArgument,
  InvalidTarget,
  InvalidConfig,
  ParseFailure,
  SchemaViolation,
  UnknownEvidenceKind,
  BackendUnavailable,
  MalformedResponse,
  EmptyMask,
  ImageDecodeError,
  NoInstances,
  MissingScope,
  EmptyChecks,
  EmptyInput,
  MissingPrediction,
  CacheMiss,
  ScriptMismatch,
  ScriptExhausted,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kestrel
