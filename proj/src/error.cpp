#include "stratgeo/error.hpp"

namespace stratgeo {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::ManifestParseError: return "ManifestParseError";
    case ErrorCode::PayloadBoundsError: return "PayloadBoundsError";
    case ErrorCode::DtypeUnsupported: return "DtypeUnsupported";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooFewTokens: return "TooFewTokens";
    case ErrorCode::TopKTooLarge: return "TopKTooLarge";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::BadMode: return "BadMode";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::TargetTooLarge: return "TargetTooLarge";
    case ErrorCode::AllDuplicates: return "AllDuplicates";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NoClusters: return "NoClusters";
    case ErrorCode::TooFewClusters: return "TooFewClusters";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingDependency: return "MissingDependency";
  }
  return "Unknown";
}

}  // namespace stratgeo
