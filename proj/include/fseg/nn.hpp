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

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fseg/ops.hpp"
#include "fseg/tensor.hpp"

namespace fseg {

// Seeded generator with distribution code owned here, so sampled values do
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [lo, hi].
  int UniformInt(int lo, int hi);
  double Normal();
  // Fisher-Yates.
  void Shuffle(std::vector<int>& values);

  std::string SaveState() const;
  void LoadState(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

namespace nn {

enum class Init {
  kHeNormal,      // N(0, 2/fan_in)
  kTruncNormal,   // N(0, 0.02^2) truncated at 2 sigma
  kXavier,        // U(-a, a), a = sqrt(6/(fan_in+fan_out))
  kZero,
};

void Initialize(Tensor& t, Init init, int fan_in, int fan_out, Rng& rng);

// Ordered name -> parameter table. Tensors share storage with the modules
// that registered them.
class ParamSet {
 public:
  void Add(const std::string& name, const Tensor& t);
  void Append(const ParamSet& other);

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  size_t size() const { return items_.size(); }
  const Tensor* Find(const std::string& name) const;

  void SetRequiresGrad(bool value);
  void ZeroGrad();
  int64_t NumValues() const;
  // FNV-1a over names and raw value bytes.
  uint64_t Checksum() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, Init init, Rng& rng);

  Tensor operator()(const Tensor& x) const { return ops::Linear(x, weight, bias); }
  void Register(ParamSet& params, const std::string& prefix) const;
  int in_features() const { return weight.dim(1); }
  int out_features() const { return weight.dim(0); }

  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, ops::ConvOptions options,
         Init init, Rng& rng);

  Tensor operator()(const Tensor& x) const {
    return ops::Conv2d(x, weight, bias, options);
  }
  void Register(ParamSet& params, const std::string& prefix) const;

  Tensor weight;  // [out, in/groups, k, k]
  Tensor bias;
  ops::ConvOptions options;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int channels);

  Tensor operator()(const Tensor& x) const { return ops::LayerNorm(x, gamma, beta); }
  void Register(ParamSet& params, const std::string& prefix) const;

  Tensor gamma;
  Tensor beta;
};

// [N,C,H,W] <-> [N,H*W,C].
Tensor ToTokens(const Tensor& nchw);
Tensor FromTokens(const Tensor& tokens, int height, int width);

}  // namespace nn
}  // namespace fseg
