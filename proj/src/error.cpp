// SPDX-License-Identifier: Apache-2.0

#include "gatllm/error.hpp"

namespace gatllm {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Format: return "format error";
    case ErrorCode::Range: return "range violation";
    case ErrorCode::Shape: return "shape mismatch";
    case ErrorCode::Config: return "configuration error";
    case ErrorCode::ConfigMismatch: return "configuration mismatch";
    case ErrorCode::Checksum: return "checksum mismatch";
    case ErrorCode::Version: return "version mismatch";
    case ErrorCode::Diverged: return "training diverged";
    case ErrorCode::Data: return "data error";
  }
  return "unknown error";
}

}  // namespace gatllm
