#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace docforge {

enum class ErrorKind {
  MissingReference,
  InvalidWeights,
  InvalidArgument,
  GroupTooSmall,
  ShapeMismatch,
  UnknownToken,
  BadK,
  DimensionMismatch,
  UnassignedDocument,
  EmptyIndex,
  TargetAbsent,
  DepthTooLarge,
  PreconditionViolated,
  MalformedRecord,
  ConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingReference: return "MissingReference";
    case ErrorKind::InvalidWeights: return "InvalidWeights";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::GroupTooSmall: return "GroupTooSmall";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UnknownToken: return "UnknownToken";
    case ErrorKind::BadK: return "BadK";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::UnassignedDocument: return "UnassignedDocument";
    case ErrorKind::EmptyIndex: return "EmptyIndex";
    case ErrorKind::TargetAbsent: return "TargetAbsent";
    case ErrorKind::DepthTooLarge: return "DepthTooLarge";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace docforge
