#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace inrbo {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kNotPositiveDefinite,
  kNonPositiveDiagonal,
  kInvalidSpace,
  kOutOfBounds,
  kUnsupportedNu,
  kSingularGram,
  kNonFiniteActivation,
  kNonFiniteGradient,
  kUnsupportedFormat,
  kCorruptFile,
  kModalityMismatch,
  kEmptyRun,
  kCorruptLog,
  kSettingsMismatch,
  kConfigError,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries one of the codes above; the
// message is meant for humans and names the offending field, file or index.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace inrbo
