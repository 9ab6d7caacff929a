#include "tsarank/error.hpp"

namespace tsarank {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "shape_mismatch";
    case ErrorCode::InvalidAxis: return "invalid_axis";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::NonScalarLoss: return "non_scalar_loss";
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Io: return "io_error";
    case ErrorCode::CorruptCheckpoint: return "corrupt_checkpoint";
    case ErrorCode::FormatVersion: return "format_version";
    case ErrorCode::ConfigMismatch: return "config_mismatch";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::SequenceTooLong: return "sequence_too_long";
    case ErrorCode::DuplicateId: return "duplicate_id";
    case ErrorCode::UnknownId: return "unknown_id";
    case ErrorCode::Parse: return "parse_error";
    case ErrorCode::UnknownCategory: return "unknown_category";
    case ErrorCode::InsufficientCandidates: return "insufficient_candidates";
    case ErrorCode::MissingPrerequisite: return "missing_prerequisite";
    case ErrorCode::ConfigValidation: return "config_validation";
  }
  return "unknown";
}

}  // namespace tsarank
