// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace petsynth {

// Stable failure categories. The CLI maps these onto documented exit codes,
// file-format errors keep their own codes so callers can tell a corrupt
// header from a short read.
enum class ErrorCode {
  InvalidArgument,
  ModalityMismatch,
  DimMismatch,
  BadMagic,
  TruncatedPayload,
  PayloadMismatch,
  IoError,
  BadToken,
  EmptyMaskPlan,
  ConfigError,
  MissingData,
  CheckpointVersion,
  CheckpointMismatch,
  NonFiniteLoss,
  Divergence,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace petsynth
