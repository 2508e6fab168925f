#include "inrbo/errors.hpp"

namespace inrbo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kNonPositiveDiagonal: return "NonPositiveDiagonal";
    case ErrorCode::kInvalidSpace: return "InvalidSpace";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kUnsupportedNu: return "UnsupportedNu";
    case ErrorCode::kSingularGram: return "SingularGram";
    case ErrorCode::kNonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kCorruptFile: return "CorruptFile";
    case ErrorCode::kModalityMismatch: return "ModalityMismatch";
    case ErrorCode::kEmptyRun: return "EmptyRun";
    case ErrorCode::kCorruptLog: return "CorruptLog";
    case ErrorCode::kSettingsMismatch: return "SettingsMismatch";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace inrbo
