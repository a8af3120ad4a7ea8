// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace casgd {

/// Failure categories. Values are mirrored one-to-one by casgd_status in the
/// C header, so the numbering is part of the ABI.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kInvalidSize = 2,
  kInvalidRange = 3,
  kIndex = 4,
  kDomain = 5,
  kDegenerate = 6,
  kInvalidCost = 7,
  kZeroProbability = 8,
  kUnboundedMoment = 9,
  kUnsupported = 10,
  kSizeLimit = 11,
  kIo = 12,
  kParse = 13,
  kNumeric = 14,
  kGroupSize = 15,
  kInternal = 16,
};

const char* error_code_name(ErrorCode code) noexcept;

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

}  // namespace casgd
