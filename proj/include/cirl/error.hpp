#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cirl {

enum class ErrorKind {
  MalformedMap,
  InvariantViolation,
  EpisodeOver,
  Unreachable,
  CorruptTrajectory,
  EmptySelection,
  NonFiniteParameters,
  NonFiniteLoss,
  Diverged,
  EmptyGroup,
  SessionExpired,
  StaleRound,
  InvalidAction,
  UnknownSession,
  FormatError,
  UsageError,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MalformedMap: return "MalformedMap";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::EpisodeOver: return "EpisodeOver";
    case ErrorKind::Unreachable: return "Unreachable";
    case ErrorKind::CorruptTrajectory: return "CorruptTrajectory";
    case ErrorKind::EmptySelection: return "EmptySelection";
    case ErrorKind::NonFiniteParameters: return "NonFiniteParameters";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::SessionExpired: return "SessionExpired";
    case ErrorKind::StaleRound: return "StaleRound";
    case ErrorKind::InvalidAction: return "InvalidAction";
    case ErrorKind::UnknownSession: return "UnknownSession";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::UsageError: return "UsageError";
  }
  return "Unknown";
}

/// Every failure surfaced by the library carries one of the kinds above so
/// callers (and the CLI) can dispatch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace cirl
