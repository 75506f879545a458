// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reno {

enum class ErrorKind {
  EmptyInput,
  InvalidInput,
  DepthMismatch,
  DepthUnderflow,
  DepthTooSmall,
  NotAChild,
  InvalidCode,
  CorruptPyramid,
  IndexError,
  MissingParent,
  InvalidProbability,
  UnexpectedEof,
  CorruptStream,
  ModelMismatch,
  ParseError,
  Unsupported,
  Io,
  NonFiniteLoss,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
  {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

}  // namespace reno
