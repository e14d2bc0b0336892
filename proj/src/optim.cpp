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
#include "fseg/optim.hpp"

#include <cmath>

namespace fseg {

Adam::Adam(nn::ParamSet params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& [name, t] : params_.items()) {
    m_.emplace_back(t.numel(), 0.0f);
    v_.emplace_back(t.numel(), 0.0f);
  }
}

void Adam::Step(double lr) {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double step = lr / c1;
  for (size_t p = 0; p < params_.items().size(); ++p) {
    Tensor t = params_.items()[p].second;
    if (!t.has_grad()) continue;
    const std::span<const float> g = t.grad();
    float* w = t.data();
    float* m = m_[p].data();
    float* v = v_[p].data();
    for (int64_t i = 0; i < t.numel(); ++i) {
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
      const double denom = std::sqrt(v[i] / c2) + options_.epsilon;
      w[i] = static_cast<float>(w[i] - step * m[i] / denom);
    }
  }
}

double GradNorm(const nn::ParamSet& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params.items()) {
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double ClipGradNorm(const nn::ParamSet& params, double max_norm) {
  const double norm = GradNorm(params);
  if (norm > max_norm && std::isfinite(norm)) {
    const float scale = static_cast<float>(max_norm / (norm + 1e-12));
    for (const auto& [name, t] : params.items()) {
      if (!t.has_grad()) continue;
      Tensor copy = t;
      float* g = copy.mutable_grad();
      for (int64_t i = 0; i < copy.numel(); ++i) g[i] *= scale;
    }
  }
  return norm;
}

}  // namespace fseg
