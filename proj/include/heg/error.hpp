#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace heg {

enum class ErrorKind {
  UnknownEvent,
  CycleDetected,
  MultipleParents,
  HeightExceeded,
  InvalidEdge,
  EmptyKB,
  InvalidConfig,
  InvalidMention,
  MissingLabel,
  DimensionMismatch,
  DegenerateBatch,
  EmptyTrainSplit,
  NoHierarchyEdges,
  KTooLarge,
  EmptyRetrievals,
  EmptyRecords,
  UndefinedScore,
  ParseError,
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownEvent: return "UnknownEvent";
    case ErrorKind::CycleDetected: return "CycleDetected";
    case ErrorKind::MultipleParents: return "MultipleParents";
    case ErrorKind::HeightExceeded: return "HeightExceeded";
    case ErrorKind::InvalidEdge: return "InvalidEdge";
    case ErrorKind::EmptyKB: return "EmptyKB";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidMention: return "InvalidMention";
    case ErrorKind::MissingLabel: return "MissingLabel";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DegenerateBatch: return "DegenerateBatch";
    case ErrorKind::EmptyTrainSplit: return "EmptyTrainSplit";
    case ErrorKind::NoHierarchyEdges: return "NoHierarchyEdges";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::EmptyRetrievals: return "EmptyRetrievals";
    case ErrorKind::EmptyRecords: return "EmptyRecords";
    case ErrorKind::UndefinedScore: return "UndefinedScore";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// All library failures are reported through this type; `kind()` is the
/// machine-readable category and `what()` carries the context.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace heg
