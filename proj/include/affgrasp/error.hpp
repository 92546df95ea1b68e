#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace affgrasp {

enum class ErrorCode {
  InvalidArgument,
  EmptyInput,
  EmptyResult,
  OutOfBounds,
  FrameMismatch,
  DegenerateInput,
  DegenerateSegment,
  ParseError,
  UnknownCategory,
  InsufficientData,
  ShapeError,
  BatchTooSmall,
  CacheMismatch,
  TrainingDiverged,
  CorruptCheckpoint,
  UnsupportedVersion,
  TooManyClusters,
  NoFeasibleApproach,
  TableCollision,
  NoAffordance,
  NoPlan,
  IoError,
};

std::string_view to_string(ErrorCode code);

// All domain failures surface as this one exception type; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace affgrasp
