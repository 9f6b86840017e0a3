#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace carpet {

enum class ErrorCode {
  FileNotFound,
  UnsupportedFormat,
  CorruptImage,
  InvalidDimensions,
  InvalidImage,
  UnknownLayer,
  WeightsNotLoaded,
  WrongLayer,
  EmptyText,
  TextTooLong,
  ShapeMismatch,
  LayerSetMismatch,
  PaletteMismatch,
  NonFiniteLoss,
  PatchTooLarge,
  EmptyGrid,
  IndexOutOfRange,
  InvalidConfig,
  StageFailure,
  Cancelled,
  NotFound,
  TooLarge,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptImage: return "CorruptImage";
    case ErrorCode::InvalidDimensions: return "InvalidDimensions";
    case ErrorCode::InvalidImage: return "InvalidImage";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::WeightsNotLoaded: return "WeightsNotLoaded";
    case ErrorCode::WrongLayer: return "WrongLayer";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::TextTooLong: return "TextTooLong";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LayerSetMismatch: return "LayerSetMismatch";
    case ErrorCode::PaletteMismatch: return "PaletteMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::PatchTooLarge: return "PatchTooLarge";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::StageFailure: return "StageFailure";
    case ErrorCode::Cancelled: return "Cancelled";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI, HTTP layer) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace carpet
