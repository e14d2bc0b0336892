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

#include <string>
#include <vector>

#include "fseg/nn.hpp"

namespace fseg {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed parameter set. Parameters without a gradient are
// skipped and keep their moments.
class Adam {
 public:
  Adam() = default;
  Adam(nn::ParamSet params, AdamOptions options = {});

  void Step(double lr);
  long steps() const { return steps_; }
  const nn::ParamSet& params() const { return params_; }

  // Moments by parameter index, for checkpoints.
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }
  void set_steps(long steps) { steps_ = steps; }

 private:
  nn::ParamSet params_;
  AdamOptions options_;
  std::vector<std::vector<float>> m_, v_;
  long steps_ = 0;
};

// Global L2 norm over all gradients in `params`.
double GradNorm(const nn::ParamSet& params);

// Rescales gradients so the global norm is at most max_norm. Returns the
// norm measured before clipping.
double ClipGradNorm(const nn::ParamSet& params, double max_norm);

}  // namespace fseg
