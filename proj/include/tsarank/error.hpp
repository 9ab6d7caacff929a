#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tsarank {

enum class ErrorCode {
  ShapeMismatch,
  InvalidAxis,
  NonFinite,
  NonScalarLoss,
  InvalidArgument,
  Io,
  CorruptCheckpoint,
  FormatVersion,
  ConfigMismatch,
  EmptyInput,
  SequenceTooLong,
  DuplicateId,
  UnknownId,
  Parse,
  UnknownCategory,
  InsufficientCandidates,
  MissingPrerequisite,
  ConfigValidation,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries a stable code so the CLI can
/// emit a machine-readable error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tsarank
