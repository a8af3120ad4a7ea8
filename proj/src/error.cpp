// SPDX-License-Identifier: Apache-2.0
#include "casgd/error.hpp"

namespace casgd {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidSize: return "invalid-size";
    case ErrorCode::kInvalidRange: return "invalid-range";
    case ErrorCode::kIndex: return "index";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kInvalidCost: return "invalid-cost";
    case ErrorCode::kZeroProbability: return "zero-probability";
    case ErrorCode::kUnboundedMoment: return "unbounded-moment";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kSizeLimit: return "size-limit";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kGroupSize: return "group-size";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace casgd
