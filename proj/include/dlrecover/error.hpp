/*
 * Copyright 2026 The dlrecover Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DLRECOVER_ERROR_HPP_
#define DLRECOVER_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace dlr {

enum class Errc {
  division_by_zero,
  range_overflow,
  empty_secret,
  share_mismatch,
  insufficient_shares,
  corrupt_share,
  shape_error,
  unsupported,
  empty_evaluation,
  protocol_violation,
  insufficient_curvature,
  singular_curvature,
  history_gap,
  precondition_failed,
  corrupt_checkpoint,
  unsupported_version,
  invalid_config,
  missing_checkpoint,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::division_by_zero: return "DivisionByZero";
    case Errc::range_overflow: return "RangeOverflow";
    case Errc::empty_secret: return "EmptySecret";
    case Errc::share_mismatch: return "ShareMismatch";
    case Errc::insufficient_shares: return "InsufficientShares";
    case Errc::corrupt_share: return "CorruptShare";
    case Errc::shape_error: return "ShapeError";
    case Errc::unsupported: return "Unsupported";
    case Errc::empty_evaluation: return "EmptyEvaluation";
    case Errc::protocol_violation: return "ProtocolViolation";
    case Errc::insufficient_curvature: return "InsufficientCurvature";
    case Errc::singular_curvature: return "SingularCurvature";
    case Errc::history_gap: return "HistoryGap";
    case Errc::precondition_failed: return "PreconditionFailed";
    case Errc::corrupt_checkpoint: return "CorruptCheckpoint";
    case Errc::unsupported_version: return "UnsupportedVersion";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::missing_checkpoint: return "MissingCheckpoint";
  }
  return "Unknown";
}

// All library failures surface as this exception; `code()` is the stable,
// machine-readable part and `what()` carries human context.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace dlr

#endif  // DLRECOVER_ERROR_HPP_
