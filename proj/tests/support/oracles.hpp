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

// Independent reference implementations used as test oracles. Everything
// here is written directly from the defining formulas with plain loops in
// double precision and shares no code with the library.

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "fseg/nn.hpp"
#include "fseg/ops.hpp"
#include "fseg/tensor.hpp"

namespace fseg::oracle {

Tensor RandomTensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

struct GradSample {
  int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences of loss() w.r.t. the `count` entries of `param` with
// the largest analytic gradient magnitude.
std::vector<GradSample> CheckGradient(Tensor param, const std::function<Tensor()>& loss,
                                      int count, double eps = 1e-3);
// Random weights on a centred window x window patch of every channel, zero
// elsewhere. Probing few outputs keeps float32 rounding noise in the
// finite differences well below the gradient signal.
Tensor SparseProbe(const Shape& nchw, Rng& rng, int window = 2);
bool Agrees(const GradSample& s, double rtol = 1e-2);

// Direct 7-loop convolution with zero padding.
std::vector<double> Conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                           const ops::ConvOptions& opt);

// Histogram entropy in bits over 256 levels of values in [0,1].
double Entropy(const std::vector<float>& v);
double StdDev(const std::vector<float>& v);
double SpatialFrequency(const std::vector<float>& v, int h, int w);
double Pearson(const std::vector<float>& a, const std::vector<float>& b);
double Scd(const std::vector<float>& u, const std::vector<float>& x,
           const std::vector<float>& y);

struct ClassScores {
  std::vector<double> acc, iou;
  double macc = 0.0, miou = 0.0;
};
// Counts from label lists, then recall / IoU per class present in the
// ground truth or the prediction.
ClassScores SegmentationScores(const std::vector<int>& pred, const std::vector<int>& gt,
                               int classes, int ignore_index);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5) of one plane.
double Ssim(const std::vector<float>& a, const std::vector<float>& b, int h, int w);
// img - Gaussian blur with replicate borders, kernel k.
std::vector<double> Dog(const std::vector<float>& img, int h, int w, int k);
double LossGrad(const std::vector<float>& u, const std::vector<float>& x,
                const std::vector<float>& y, int h, int w);
std::vector<double> Vsm(const std::vector<float>& img);

// lambda_i = eta_i exp(r_i / T) / sum_k exp(r_k / T), evaluated directly.
std::vector<double> Softmax(const std::vector<double>& r, const std::vector<double>& eta,
                            double t);

}  // namespace fseg::oracle
