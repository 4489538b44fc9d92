#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace pulse {

enum class ErrorCode {
  InvalidArgument,
  NonFiniteSample,
  SeriesTooShort,
  InvalidWindowSpec,
  InvalidCutoff,
  GridMismatch,
  ZeroReference,
  InsufficientData,
  DegenerateFit,
  EmptyCorpus,
  ParseError,
  OverlapConflict,
  UserNotFound,
  NoRecordingAtTime,
  IoError,
  BackendUnavailable,
  BackendTimeout,
  PlanningFailed,
  NeedsClarification,
  ResponseMalformed,
  UnknownTask,
  UnboundReference,
  TaskFailed,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code and an
// optional structured detail payload (e.g. the nearest recording for
// NoRecordingAtTime).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, nlohmann::json detail = nullptr)
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  nlohmann::json detail_;
};

}  // namespace pulse
