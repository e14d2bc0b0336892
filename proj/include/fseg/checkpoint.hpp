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

// Checkpoint directory: manifest.json (format version, creation time,
// config snapshot, seed, round, scalar state, tensor table) and
// tensors.bin (little-endian float32, row-major, manifest order).

#include <cstdint>
#include <string>
#include <vector>

#include "fseg/tensor.hpp"
#include "json.hpp"

namespace fseg {

constexpr int kCheckpointVersion = 1;
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kBlobFile = "tensors.bin";

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  int format_version = kCheckpointVersion;
  // ISO-8601 UTC; SOURCE_DATE_EPOCH overrides the clock when set.
  std::string created;
  nlohmann::json config;
  uint64_t seed = 0;
  int round = 0;
  // Non-tensor state (counters, loss history, RNG state). Doubles survive
  // the JSON round trip exactly.
  nlohmann::json scalars = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* Find(const std::string& name) const;
  void Add(const std::string& name, const Tensor& t);
};

std::string CreationTimestamp();

void SaveCheckpoint(const Checkpoint& ckpt, const std::string& dir);
// Throws IoError, VersionMismatch or CorruptBlob.
Checkpoint LoadCheckpoint(const std::string& dir);

}  // namespace fseg
