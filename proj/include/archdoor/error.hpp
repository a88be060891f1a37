// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace archdoor {

enum class ErrorKind {
  kInvalidArgument,
  kUnresolvedReference,
  kCycle,
  kUnboundInput,
  kMalformedDocument,
  kUnknownOp,
  kVersionMismatch,
  kShapeMismatch,
  kNonFinite,
  kBoundExceeded,
  kOverflow,
  kIncompatible,
  kInternal,
};

std::string_view to_string(ErrorKind kind);

/// Domain error raised by every module. `kind()` identifies the contract
/// clause that was violated; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace archdoor
