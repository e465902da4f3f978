#include "ptext/error.hpp"

namespace ptext {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::DuplicateClass: return "DuplicateClass";
    case ErrorCode::EmptyDict: return "EmptyDict";
    case ErrorCode::NoCaptionsForClass: return "NoCaptionsForClass";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NoCache: return "NoCache";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ClassWithoutPositives: return "ClassWithoutPositives";
    case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorCode::MissingFrameFeatures: return "MissingFrameFeatures";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::Io:
    case ErrorCode::NoCache:
      return false;
    default:
      return true;
  }
}

}  // namespace ptext
