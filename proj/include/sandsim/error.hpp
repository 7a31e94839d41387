#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sandsim {

enum class ErrorKind {
  DimensionMismatch,
  NonFiniteGradient,
  NonFiniteLoss,
  MissingMask,
  DuplicateRegionId,
  UnclassifiedStroke,
  IoError,
  DomainError,
  SingularDecomposition,
  EmptySequence,
  DegenerateReference,
  ParseError,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind so the
/// CLI and the service can report it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace sandsim
