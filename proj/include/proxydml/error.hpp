#pragma once

#include <stdexcept>
#include <string>

namespace pdml {

enum class ErrorCode {
  InvalidArgument,
  InvalidConfig,
  ShapeMismatch,
  ZeroVector,
  EmptyBatch,
  InvalidK,
  NoPositives,
  EmptyResultSet,
  SpecInfeasible,
  TooFewClasses,
  ParseError,
  DimensionMismatch,
  IoError,
  BatchTooSmall,
  NonFiniteLoss,
  EmptyGallery,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the core library carries one of the codes above so
/// the C boundary can translate it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace pdml
