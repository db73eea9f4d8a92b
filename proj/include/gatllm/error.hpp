// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gatllm {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Format,
  Range,
  Shape,
  Config,
  ConfigMismatch,
  Checksum,
  Version,
  Diverged,
  Data,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure inside the library surfaces as this exception; the C layer
/// maps `code()` onto `gatllm_status`.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gatllm
