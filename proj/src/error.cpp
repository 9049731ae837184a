#include "turbo_twin/error.hpp"

namespace turbo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidCombination: return "InvalidCombination";
    case ErrorCode::InconsistentPairing: return "InconsistentPairing";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::WrongKind: return "WrongKind";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonBinaryTarget: return "NonBinaryTarget";
    case ErrorCode::MissingPairing: return "MissingPairing";
    case ErrorCode::EmptyManifest: return "EmptyManifest";
    case ErrorCode::CropTooLarge: return "CropTooLarge";
    case ErrorCode::BatchTooLarge: return "BatchTooLarge";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ThresholdUnsupported: return "ThresholdUnsupported";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DataExhausted: return "DataExhausted";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonPSD: return "NonPSD";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::MissingRunRecord: return "MissingRunRecord";
  }
  return "Unknown";
}

}  // namespace turbo
