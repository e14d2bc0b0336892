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
#include "fseg/checkpoint.hpp"

#include <bit>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "fseg/errors.hpp"

namespace fseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint32_t ToLittle(uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace

const NamedTensor* Checkpoint::Find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void Checkpoint::Add(const std::string& name, const Tensor& t) {
  FSEG_CHECK(Find(name) == nullptr, ErrorKind::kConfig, "duplicate tensor " + name);
  tensors.push_back({name, t.shape(), {t.vec().begin(), t.vec().end()}});
}

std::string CreationTimestamp() {
  std::time_t now;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
    now = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  } else {
    now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  FSEG_CHECK(!ec, ErrorKind::kIo, "cannot create " + dir + ": " + ec.message());

  json table = json::array();
  uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    FSEG_CHECK(NumElements(t.shape) == static_cast<int64_t>(t.values.size()),
               ErrorKind::kShapeMismatch, "tensor " + t.name + " size disagrees with shape");
    table.push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "float32"},
                     {"offset", offset}});
    offset += t.values.size() * sizeof(float);
  }
  json manifest = {{"format_version", ckpt.format_version},
                   {"created", ckpt.created.empty() ? CreationTimestamp() : ckpt.created},
                   {"config", ckpt.config},
                   {"seed", ckpt.seed},
                   {"round", ckpt.round},
                   {"scalars", ckpt.scalars},
                   {"blob_bytes", offset},
                   {"tensors", table}};

  // Blob first: a manifest only appears next to a complete blob.
  const fs::path blob_path = fs::path(dir) / kBlobFile;
  {
    std::ofstream out(blob_path, std::ios::binary | std::ios::trunc);
    FSEG_CHECK(out.good(), ErrorKind::kIo, "cannot write " + blob_path.string());
    std::vector<uint32_t> words;
    for (const auto& t : ckpt.tensors) {
      words.resize(t.values.size());
      for (size_t i = 0; i < t.values.size(); ++i) {
        words[i] = ToLittle(std::bit_cast<uint32_t>(t.values[i]));
      }
      out.write(reinterpret_cast<const char*>(words.data()),
                static_cast<std::streamsize>(words.size() * sizeof(uint32_t)));
    }
    FSEG_CHECK(out.good(), ErrorKind::kIo, "write failed for " + blob_path.string());
  }
  const fs::path manifest_path = fs::path(dir) / kManifestFile;
  std::ofstream out(manifest_path, std::ios::trunc);
  FSEG_CHECK(out.good(), ErrorKind::kIo, "cannot write " + manifest_path.string());
  out << manifest.dump(2) << "\n";
  FSEG_CHECK(out.good(), ErrorKind::kIo, "write failed for " + manifest_path.string());
}

Checkpoint LoadCheckpoint(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / kManifestFile;
  std::ifstream in(manifest_path);
  FSEG_CHECK(in.good(), ErrorKind::kIo, "no checkpoint manifest at " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptBlob, "manifest " + manifest_path.string() + ": " + e.what());
  }

  Checkpoint ckpt;
  std::vector<uint64_t> offsets;
  uint64_t declared = 0;
  try {
    ckpt.format_version = m.at("format_version").get<int>();
    FSEG_CHECK(ckpt.format_version == kCheckpointVersion, ErrorKind::kVersionMismatch,
               "checkpoint format " + std::to_string(ckpt.format_version) +
                   ", expected " + std::to_string(kCheckpointVersion));
    ckpt.created = m.at("created").get<std::string>();
    ckpt.config = m.at("config");
    ckpt.seed = m.at("seed").get<uint64_t>();
    ckpt.round = m.at("round").get<int>();
    ckpt.scalars = m.at("scalars");
    declared = m.at("blob_bytes").get<uint64_t>();
    for (const auto& entry : m.at("tensors")) {
      FSEG_CHECK(entry.at("dtype").get<std::string>() == "float32", ErrorKind::kCorruptBlob,
                 "unsupported dtype in manifest");
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      offsets.push_back(entry.at("offset").get<uint64_t>());
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptBlob, "manifest " + manifest_path.string() + ": " + e.what());
  }

  uint64_t expected = 0;
  for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
    FSEG_CHECK(offsets[i] == expected, ErrorKind::kCorruptBlob,
               "tensor " + ckpt.tensors[i].name + " offset is not contiguous");
    const int64_t n = NumElements(ckpt.tensors[i].shape);
    FSEG_CHECK(n >= 0, ErrorKind::kCorruptBlob, "negative extent in " + ckpt.tensors[i].name);
    expected += static_cast<uint64_t>(n) * sizeof(float);
  }
  FSEG_CHECK(expected == declared, ErrorKind::kCorruptBlob,
             "manifest byte count disagrees with its tensor table");

  const fs::path blob_path = fs::path(dir) / kBlobFile;
  std::error_code ec;
  const uintmax_t actual = fs::file_size(blob_path, ec);
  FSEG_CHECK(!ec, ErrorKind::kIo, "cannot stat " + blob_path.string());
  FSEG_CHECK(actual == expected, ErrorKind::kCorruptBlob,
             "blob holds " + std::to_string(actual) + " bytes, manifest expects " +
                 std::to_string(expected));
  std::ifstream blob(blob_path, std::ios::binary);
  FSEG_CHECK(blob.good(), ErrorKind::kIo, "cannot open " + blob_path.string());
  std::vector<uint32_t> words;
  for (auto& t : ckpt.tensors) {
    words.resize(NumElements(t.shape));
    blob.read(reinterpret_cast<char*>(words.data()),
              static_cast<std::streamsize>(words.size() * sizeof(uint32_t)));
    FSEG_CHECK(blob.good() || words.empty(), ErrorKind::kCorruptBlob,
               "short read in " + blob_path.string());
    t.values.resize(words.size());
    for (size_t i = 0; i < words.size(); ++i) {
      t.values[i] = std::bit_cast<float>(ToLittle(words[i]));
    }
  }
  return ckpt;
}

}  // namespace fseg
