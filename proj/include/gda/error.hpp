#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gda {

enum class ErrorKind {
  MalformedHeader,
  DTypeMismatch,
  IoFailure,
  ZeroRow,
  EmptyClass,
  TooFewSamples,
  DegenerateCovariance,
  DimensionMismatch,
  LengthMismatch,
  InvalidArgument,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::DTypeMismatch: return "DTypeMismatch";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::ZeroRow: return "ZeroRow";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the toolkit carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace gda
