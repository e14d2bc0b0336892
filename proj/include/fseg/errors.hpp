/* Copyright 2026 The fusionseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <stdexcept>
#include <string>

namespace fseg {

// Error categories surfaced by the library. The CLI maps them onto exit
// codes (config 2, data 3, numerical 4).
enum class ErrorKind {
  kShapeMismatch,
  kConfig,
  kDecode,
  kUnknownColor,
  kEmptyTarget,
  kEmptyMatrix,
  kNumerical,
  kIo,
  kVersionMismatch,
  kCorruptBlob,
};

const char* ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + what),
        kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kDecode: return "DecodeError";
    case ErrorKind::kUnknownColor: return "UnknownColor";
    case ErrorKind::kEmptyTarget: return "EmptyTarget";
    case ErrorKind::kEmptyMatrix: return "EmptyMatrix";
    case ErrorKind::kNumerical: return "NumericalError";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kVersionMismatch: return "VersionMismatch";
    case ErrorKind::kCorruptBlob: return "CorruptBlob";
  }
  return "Error";
}

#define FSEG_CHECK(cond, kind, msg)                 \
  do {                                              \
    if (!(cond)) throw ::fseg::Error((kind), (msg)); \
  } while (0)

}  // namespace fseg
