#include "lungct/error.hpp"

namespace lungct {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "Usage";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::UnknownKey: return "UnknownKey";
    case ErrorKind::InvalidValue: return "InvalidValue";
    case ErrorKind::InvalidRatios: return "InvalidRatios";
    case ErrorKind::MissingRoot: return "MissingRoot";
    case ErrorKind::NoRecognizableClassFolder: return "NoRecognizableClassFolder";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::UnknownClassName: return "UnknownClassName";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::UndecodableFile: return "UndecodableFile";
    case ErrorKind::UnsupportedBitDepth: return "UnsupportedBitDepth";
    case ErrorKind::ZeroSizeTarget: return "ZeroSizeTarget";
    case ErrorKind::AlreadyMultiChannel: return "AlreadyMultiChannel";
    case ErrorKind::NonPositiveFactor: return "NonPositiveFactor";
    case ErrorKind::HoleLargerThanImage: return "HoleLargerThanImage";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonProbabilityInput: return "NonProbabilityInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::UnknownBackbone: return "UnknownBackbone";
    case ErrorKind::WeightsUnavailable: return "WeightsUnavailable";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyHistory: return "EmptyHistory";
    case ErrorKind::EmptyTable: return "EmptyTable";
    case ErrorKind::UnwritablePath: return "UnwritablePath";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::MissingFile:
    case ErrorKind::UnknownKey:
    case ErrorKind::InvalidValue:
    case ErrorKind::InvalidRatios:
    case ErrorKind::UnknownBackbone:
      return 1;
    case ErrorKind::NonFiniteLoss:
      return 3;
    case ErrorKind::EmptyHistory:
    case ErrorKind::EmptyTable:
    case ErrorKind::UnwritablePath:
    case ErrorKind::Io:
      return 4;
    default:
      return 2;
  }
}

} // namespace lungct
