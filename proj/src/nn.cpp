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
#include "fseg/nn.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "fseg/errors.hpp"

namespace fseg {

int Rng::UniformInt(int lo, int hi) {
  FSEG_CHECK(lo <= hi, ErrorKind::kConfig, "UniformInt: empty range");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

double Rng::Normal() {
  // Box-Muller; one variate per call keeps the stream position simple.
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void Rng::Shuffle(std::vector<int>& values) {
  for (int i = static_cast<int>(values.size()) - 1; i > 0; --i) {
    std::swap(values[i], values[UniformInt(0, i)]);
  }
}

std::string Rng::SaveState() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::LoadState(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  FSEG_CHECK(!in.fail(), ErrorKind::kCorruptBlob, "unreadable generator state");
}

namespace nn {

void Initialize(Tensor& t, Init init, int fan_in, int fan_out, Rng& rng) {
  float* p = t.data();
  const int64_t n = t.numel();
  switch (init) {
    case Init::kZero:
      std::fill_n(p, n, 0.0f);
      break;
    case Init::kHeNormal: {
      const double sd = std::sqrt(2.0 / fan_in);
      for (int64_t i = 0; i < n; ++i) p[i] = static_cast<float>(sd * rng.Normal());
      break;
    }
    case Init::kTruncNormal:
      for (int64_t i = 0; i < n; ++i) {
        double v = rng.Normal();
        while (std::abs(v) > 2.0) v = rng.Normal();
        p[i] = static_cast<float>(0.02 * v);
      }
      break;
    case Init::kXavier: {
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (int64_t i = 0; i < n; ++i) p[i] = static_cast<float>(rng.Uniform(-a, a));
      break;
    }
  }
}

void ParamSet::Add(const std::string& name, const Tensor& t) {
  FSEG_CHECK(Find(name) == nullptr, ErrorKind::kConfig, "duplicate parameter " + name);
  items_.emplace_back(name, t);
}

void ParamSet::Append(const ParamSet& other) {
  for (const auto& [name, t] : other.items_) Add(name, t);
}

const Tensor* ParamSet::Find(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.first == name) return &item.second;
  }
  return nullptr;
}

void ParamSet::SetRequiresGrad(bool value) {
  for (auto& item : items_) item.second.impl()->requires_grad = value;
}

void ParamSet::ZeroGrad() {
  for (auto& item : items_) item.second.impl()->grad.clear();
}

int64_t ParamSet::NumValues() const {
  int64_t n = 0;
  for (const auto& item : items_) n += item.second.numel();
  return n;
}

uint64_t ParamSet::Checksum() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* bytes, size_t len) {
    const auto* b = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : items_) {
    mix(name.data(), name.size());
    mix(t.data(), t.numel() * sizeof(float));
  }
  return h;
}

Linear::Linear(int in_features, int out_features, Init init, Rng& rng)
    : weight(Shape{out_features, in_features}), bias(Shape{out_features}) {
  Initialize(weight, init, in_features, out_features, rng);
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

void Linear::Register(ParamSet& params, const std::string& prefix) const {
  params.Add(prefix + ".weight", weight);
  params.Add(prefix + ".bias", bias);
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel,
               ops::ConvOptions opts, Init init, Rng& rng)
    : weight(Shape{out_channels, in_channels / opts.groups, kernel, kernel}),
      bias(Shape{out_channels}),
      options(opts) {
  const int fan_in = in_channels / opts.groups * kernel * kernel;
  const int fan_out = out_channels / opts.groups * kernel * kernel;
  Initialize(weight, init, fan_in, fan_out, rng);
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

void Conv2d::Register(ParamSet& params, const std::string& prefix) const {
  params.Add(prefix + ".weight", weight);
  params.Add(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(int channels)
    : gamma(Shape{channels}, 1.0f), beta(Shape{channels}, 0.0f) {
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
}

void LayerNorm::Register(ParamSet& params, const std::string& prefix) const {
  params.Add(prefix + ".gamma", gamma);
  params.Add(prefix + ".beta", beta);
}

Tensor ToTokens(const Tensor& nchw) {
  FSEG_CHECK(nchw.rank() == 4, ErrorKind::kShapeMismatch,
             "ToTokens expects NCHW, got " + ShapeString(nchw.shape()));
  const int n = nchw.dim(0), c = nchw.dim(1), hw = nchw.dim(2) * nchw.dim(3);
  return ops::Permute(ops::Reshape(nchw, {n, c, hw}), {0, 2, 1});
}

Tensor FromTokens(const Tensor& tokens, int height, int width) {
  FSEG_CHECK(tokens.rank() == 3 && tokens.dim(1) == height * width,
             ErrorKind::kShapeMismatch,
             "FromTokens: " + ShapeString(tokens.shape()) + " is not " +
                 std::to_string(height) + "x" + std::to_string(width));
  const int n = tokens.dim(0), c = tokens.dim(2);
  return ops::Reshape(ops::Permute(tokens, {0, 2, 1}), {n, c, height, width});
}

}  // namespace nn
}  // namespace fseg
