// Copyright 2026 The ews-lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ewslab {

enum class ErrorCode {
  kUnknownFeature,
  kTypeMismatch,
  kMissingColumn,
  kMissingValue,
  kDuplicateFeature,
  kInvalidArgument,
  kIo,
  kEmptyCohort,
  kInfeasibleConfig,
  kMissingOutcome,
  kSchemaMismatch,
  kNotBinary,
  kNotIndividual,
  kNotNumeric,
  kLengthMismatch,
  kEmptyInput,
  kOneClassOnly,
  kEmptyGroup,
  kInsufficientSupport,
  kSingularDesign,
  kCorruptArtifact,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownFeature: return "UnknownFeature";
    case ErrorCode::kTypeMismatch: return "TypeMismatch";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kMissingValue: return "MissingValue";
    case ErrorCode::kDuplicateFeature: return "DuplicateFeature";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kEmptyCohort: return "EmptyCohort";
    case ErrorCode::kInfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::kMissingOutcome: return "MissingOutcome";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kNotBinary: return "NotBinary";
    case ErrorCode::kNotIndividual: return "NotIndividual";
    case ErrorCode::kNotNumeric: return "NotNumeric";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kOneClassOnly: return "OneClassOnly";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kInsufficientSupport: return "InsufficientSupport";
    case ErrorCode::kSingularDesign: return "SingularDesign";
    case ErrorCode::kCorruptArtifact: return "CorruptArtifact";
  }
  return "Unknown";
}

// Errors that come from estimation (as opposed to bad inputs or config).
inline bool is_estimation_error(ErrorCode code) {
  return code == ErrorCode::kInsufficientSupport ||
         code == ErrorCode::kSingularDesign ||
         code == ErrorCode::kOneClassOnly || code == ErrorCode::kEmptyGroup;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kLengthMismatch,
                std::string(what) + ": " + std::to_string(a) +
                    " != " + std::to_string(b));
  }
}

}  // namespace ewslab
