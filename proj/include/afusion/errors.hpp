/*
 * Copyright 2026 The afusion Authors.
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

#ifndef AFUSION_ERRORS_HPP_
#define AFUSION_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace afusion {

enum class ErrorKind {
  kShapeMismatch,
  kRankError,
  kNonFiniteInput,
  kAxisOutOfRange,
  kBackwardBeforeForward,
  kInvalidConfig,
  kCorruptFile,
  kVersionMismatch,
  kLabelOutOfRange,
  kEmptyEvaluationSet,
  kMIsZero,
  kInvalidSpec,
  kIoError,
  kInvalidFraction,
};

inline constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kRankError: return "RankError";
    case ErrorKind::kNonFiniteInput: return "NonFiniteInput";
    case ErrorKind::kAxisOutOfRange: return "AxisOutOfRange";
    case ErrorKind::kBackwardBeforeForward: return "BackwardBeforeForward";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kCorruptFile: return "CorruptFile";
    case ErrorKind::kVersionMismatch: return "VersionMismatch";
    case ErrorKind::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::kEmptyEvaluationSet: return "EmptyEvaluationSet";
    case ErrorKind::kMIsZero: return "MIsZero";
    case ErrorKind::kInvalidSpec: return "InvalidSpec";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kInvalidFraction: return "InvalidFraction";
  }
  return "Unknown";
}

/// Base of every error raised by the library. Callers that only need the
/// category (the CLI maps categories onto exit codes) catch this and switch
/// on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <ErrorKind K>
class KindError : public Error {
 public:
  explicit KindError(const std::string& message) : Error(K, message) {}
};

using ShapeMismatch = KindError<ErrorKind::kShapeMismatch>;
using RankError = KindError<ErrorKind::kRankError>;
using NonFiniteInput = KindError<ErrorKind::kNonFiniteInput>;
using AxisOutOfRange = KindError<ErrorKind::kAxisOutOfRange>;
using BackwardBeforeForward = KindError<ErrorKind::kBackwardBeforeForward>;
using InvalidConfig = KindError<ErrorKind::kInvalidConfig>;
using CorruptFile = KindError<ErrorKind::kCorruptFile>;
using VersionMismatch = KindError<ErrorKind::kVersionMismatch>;
using LabelOutOfRange = KindError<ErrorKind::kLabelOutOfRange>;
using EmptyEvaluationSet = KindError<ErrorKind::kEmptyEvaluationSet>;
using MIsZero = KindError<ErrorKind::kMIsZero>;
using InvalidSpec = KindError<ErrorKind::kInvalidSpec>;
using IoError = KindError<ErrorKind::kIoError>;
using InvalidFraction = KindError<ErrorKind::kInvalidFraction>;

}  // namespace afusion

#endif  // AFUSION_ERRORS_HPP_
