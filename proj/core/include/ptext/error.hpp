#pragma once

#include <stdexcept>
#include <string>

namespace ptext {

enum class ErrorCode {
  // corpus
  EmptyText,
  DuplicateClass,
  EmptyDict,
  NoCaptionsForClass,
  ClassTooSmall,
  // encoder / scoring
  EmptySequence,
  IndexOutOfRange,
  NoCache,
  ZeroVector,
  DimensionMismatch,
  // losses / trainer
  InvalidLabel,
  DegenerateLabels,
  NonFiniteLoss,
  ShapeMismatch,
  CorruptCheckpoint,
  VersionMismatch,
  InvalidConfig,
  // evalkit
  LengthMismatch,
  ClassWithoutPositives,
  MissingPlaceholder,
  MissingFrameFeatures,
  // generic
  InvalidInput,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

// Validation errors are caused by bad inputs (exit code 1 in the CLI);
// everything else is a runtime failure (exit code 2).
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ptext
