#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lungct {

enum class ErrorKind {
  // configuration / usage
  Usage,
  MissingFile,
  UnknownKey,
  InvalidValue,
  InvalidRatios,
  // data
  MissingRoot,
  NoRecognizableClassFolder,
  EmptyClass,
  ClassTooSmall,
  UnknownClassName,
  IndexOutOfRange,
  UndecodableFile,
  UnsupportedBitDepth,
  ZeroSizeTarget,
  AlreadyMultiChannel,
  NonPositiveFactor,
  HoleLargerThanImage,
  EmptyDataset,
  ShapeMismatch,
  NonProbabilityInput,
  LengthMismatch,
  LabelOutOfRange,
  EmptyMatrix,
  UnknownBackbone,
  WeightsUnavailable,
  // training
  NonFiniteLoss,
  // reporting / io
  EmptyHistory,
  EmptyTable,
  UnwritablePath,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Process exit code for an error kind: 1 usage/config, 2 data, 3 training
/// failure, 4 I/O.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

} // namespace lungct
