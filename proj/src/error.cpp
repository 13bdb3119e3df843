#include "proxydml/error.hpp"

namespace pdml {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::EmptyResultSet: return "EmptyResultSet";
    case ErrorCode::SpecInfeasible: return "SpecInfeasible";
    case ErrorCode::TooFewClasses: return "TooFewClasses";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyGallery: return "EmptyGallery";
  }
  return "Unknown";
}

}  // namespace pdml
