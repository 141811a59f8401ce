#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stratgeo {

enum class ErrorCode {
  MagicMismatch,
  ManifestParseError,
  PayloadBoundsError,
  DtypeUnsupported,
  IoError,
  InvariantViolation,
  EmptyMask,
  DimMismatch,
  ShapeMismatch,
  TooFewTokens,
  TopKTooLarge,
  IndexOutOfRange,
  BadMode,
  EmptyMatrix,
  NumericalFailure,
  TooFewSamples,
  TooFewPoints,
  TargetTooLarge,
  AllDuplicates,
  DegenerateConfiguration,
  NoClusters,
  TooFewClusters,
  ConfigError,
  MissingDependency,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace stratgeo
