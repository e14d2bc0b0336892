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

// Training objectives on gray [N,1,H,W] tensors. Squared norms are means so
// the weights stay independent of resolution.

#include <span>
#include <vector>

#include "fseg/tensor.hpp"

namespace fseg {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

// Normalized 1-D Gaussian taps of odd length.
std::vector<double> GaussianTaps(int size, double sigma);
// sigma = 0.3 * ((k - 1) / 2 - 1) + 0.8.
double DogSigma(int kernel);

// Mean SSIM over all fully-contained 11x11 windows (window shrinks to the
// largest odd size that fits smaller images). Differentiable in both.
Tensor Ssim(const Tensor& a, const Tensor& b);

// (1 - SSIM(u,x)) / 2 + (1 - SSIM(u,y)) / 2.
Tensor LossSsim(const Tensor& u, const Tensor& x, const Tensor& y);

// Histogram saliency of one plane: Sal(p) = sum_j hist(j) |I(p) - j| on the
// 0..255 quantization, max-normalized (all-zero when the max is zero).
std::vector<float> Vsm(std::span<const float> plane);

struct SaliencyWeights {
  Tensor m1;  // weights x
  Tensor m2;  // weights y, m2 = 1 - m1
};

// m1 = 0.5 + (vsm(x) - vsm(y)) / 2 per image.
SaliencyWeights ComputeSaliencyWeights(const Tensor& x, const Tensor& y);

enum class PixelLossForm {
  kLiteral,         // |u - m1 x|^2 + |u - m2 y|^2
  kMaskedResidual,  // |m1 (u - x)|^2 + |m2 (u - y)|^2
};

Tensor LossMse(const Tensor& u, const Tensor& x, const Tensor& y,
               const SaliencyWeights& weights,
               PixelLossForm form = PixelLossForm::kLiteral);

// img - GaussianBlur_k(img), replicate padding. Throws ConfigError for even
// or non-positive k.
Tensor DogGradient(const Tensor& img, int kernel);

// Sum over k in {3,5,7} of mean (dog_k(u) - T_k)^2 where T_k keeps, per
// pixel, whichever of dog_k(x), dog_k(y) has the larger magnitude (sign
// kept; equal magnitudes resolve to the larger signed value).
Tensor LossGrad(const Tensor& u, const Tensor& x, const Tensor& y);

struct FusionLossTerms {
  Tensor total;
  Tensor ssim;
  Tensor mse;
  Tensor grad;
};

// L_f = L_ssim + L_mse + eta * L_grad.
FusionLossTerms LossFusion(const Tensor& u, const Tensor& x, const Tensor& y, float eta,
                           PixelLossForm form = PixelLossForm::kLiteral);

// Softmax cross-entropy averaged over non-ignored pixels.
Tensor LossSeg(const Tensor& logits, const std::vector<int>& labels, int ignore_index);

struct LossBreakdown {
  double l_ssim = 0.0;
  double l_mse = 0.0;
  double l_grad = 0.0;
  double l_fusion = 0.0;
  double l_seg = 0.0;
  double eta = 0.0;
};

}  // namespace fseg
