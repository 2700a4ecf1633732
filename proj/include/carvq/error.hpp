#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace carvq {

enum class ErrorKind {
  MalformedHeader,
  ShapeMismatch,
  NonFiniteData,
  IoFailure,
  InvalidSpec,
  BadSubvectorDim,
  TooFewPoints,
  DimMismatch,
  IndexOutOfRange,
  TokenOutOfRange,
  IndexOverflow,
  MalformedStream,
  DivergedLoss,
  ChecksumMismatch,
  UnknownVersion,
  SectionLengthMismatch,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure in the library surfaces as a carvq::Error tagged with its kind,
// so callers (CLI, bindings) can map kinds onto exit codes / exception types.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace carvq
