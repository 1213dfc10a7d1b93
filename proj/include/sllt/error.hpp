#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sllt {

enum class ErrorKind {
  NonConservative,
  NegativeRate,
  Reducible,
  NotSquare,
  DimensionMismatch,
  AlphaOutOfRange,
  InvalidArgument,
  OdeToleranceFailure,
  GapTooSmall,
  NonConvergence,
  SingularSystem,
  NotPositiveDefinite,
  AbsorbingState,
  HorizonMismatch,
  ConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonConservative: return "NonConservative";
    case ErrorKind::NegativeRate: return "NegativeRate";
    case ErrorKind::Reducible: return "Reducible";
    case ErrorKind::NotSquare: return "NotSquare";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::OdeToleranceFailure: return "OdeToleranceFailure";
    case ErrorKind::GapTooSmall: return "GapTooSmall";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::AbsorbingState: return "AbsorbingState";
    case ErrorKind::HorizonMismatch: return "HorizonMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Library exception. `where` names the operation that raised it, so the CLI
/// can report e.g. "validate_generator: NegativeRate: ...".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string_view where, const std::string& what)
      : std::runtime_error(std::string(where) + ": " + std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        where_(where) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& where() const noexcept { return where_; }

  /// Errors caused by bad input rather than by numerics.
  bool is_usage_error() const noexcept {
    switch (kind_) {
      case ErrorKind::NonConservative:
      case ErrorKind::NegativeRate:
      case ErrorKind::Reducible:
      case ErrorKind::NotSquare:
      case ErrorKind::DimensionMismatch:
      case ErrorKind::AlphaOutOfRange:
      case ErrorKind::InvalidArgument:
      case ErrorKind::ConfigError:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
  std::string where_;
};

}  // namespace sllt
