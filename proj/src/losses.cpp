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
#include "fseg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fseg/errors.hpp"
#include "fseg/ops.hpp"

namespace fseg {

namespace {

void RequireAligned(const Tensor& u, const Tensor& x, const Tensor& y) {
  FSEG_CHECK(u.rank() == 4 && u.dim(1) == 1 && u.shape() == x.shape() &&
                 u.shape() == y.shape(),
             ErrorKind::kShapeMismatch,
             "loss inputs must be aligned [N,1,H,W]: " + ShapeString(u.shape()) + ", " +
                 ShapeString(x.shape()) + ", " + ShapeString(y.shape()));
}

Tensor GaussianKernel2d(int size, double sigma) {
  const auto taps = GaussianTaps(size, sigma);
  Buffer k(static_cast<size_t>(size) * size);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) k[i * size + j] = static_cast<float>(taps[i] * taps[j]);
  }
  return Tensor({1, 1, size, size}, std::move(k));
}

// Channels folded into the batch so one single-channel kernel serves all.
Tensor FoldChannels(const Tensor& t) {
  return ops::Reshape(t, {t.dim(0) * t.dim(1), 1, t.dim(2), t.dim(3)});
}

}  // namespace

std::vector<double> GaussianTaps(int size, double sigma) {
  std::vector<double> taps(size);
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    sum += (taps[i] = std::exp(-d * d / (2.0 * sigma * sigma)));
  }
  for (double& t : taps) t /= sum;
  return taps;
}

double DogSigma(int kernel) { return 0.3 * ((kernel - 1) / 2.0 - 1.0) + 0.8; }

Tensor Ssim(const Tensor& a, const Tensor& b) {
  FSEG_CHECK(a.rank() == 4 && a.shape() == b.shape(), ErrorKind::kShapeMismatch,
             "SSIM inputs differ: " + ShapeString(a.shape()) + " vs " +
                 ShapeString(b.shape()));
  int win = std::min({kSsimWindow, a.dim(2), a.dim(3)});
  if (win % 2 == 0) --win;
  const Tensor kernel = GaussianKernel2d(win, kSsimSigma);
  const Tensor none;
  auto blur = [&](const Tensor& t) { return ops::Conv2d(t, kernel, none, {}); };
  const Tensor fa = FoldChannels(a), fb = FoldChannels(b);
  const Tensor mu_a = blur(fa), mu_b = blur(fb);
  const Tensor mu_aa = ops::Mul(mu_a, mu_a), mu_bb = ops::Mul(mu_b, mu_b),
               mu_ab = ops::Mul(mu_a, mu_b);
  const Tensor var_a = ops::Sub(blur(ops::Mul(fa, fa)), mu_aa);
  const Tensor var_b = ops::Sub(blur(ops::Mul(fb, fb)), mu_bb);
  const Tensor cov = ops::Sub(blur(ops::Mul(fa, fb)), mu_ab);
  const float c1 = static_cast<float>(kSsimC1), c2 = static_cast<float>(kSsimC2);
  const Tensor num = ops::Mul(ops::AddScalar(ops::Scale(mu_ab, 2.0f), c1),
                              ops::AddScalar(ops::Scale(cov, 2.0f), c2));
  const Tensor den = ops::Mul(ops::AddScalar(ops::Add(mu_aa, mu_bb), c1),
                              ops::AddScalar(ops::Add(var_a, var_b), c2));
  return ops::Mean(ops::Div(num, den));
}

Tensor LossSsim(const Tensor& u, const Tensor& x, const Tensor& y) {
  RequireAligned(u, x, y);
  const Tensor sx = Ssim(u, x), sy = Ssim(u, y);
  // (1 - sx)/2 + (1 - sy)/2 = 1 - (sx + sy)/2
  return ops::AddScalar(ops::Scale(ops::Add(sx, sy), -0.5f), 1.0f);
}

std::vector<float> Vsm(std::span<const float> plane) {
  std::vector<int> level(plane.size());
  std::vector<double> hist(256, 0.0);
  for (size_t i = 0; i < plane.size(); ++i) {
    const float v = std::clamp(plane[i], 0.0f, 1.0f);
    level[i] = static_cast<int>(std::lround(v * 255.0f));
    hist[level[i]] += 1.0;
  }
  std::vector<double> table(256, 0.0);
  for (int i = 0; i < 256; ++i) {
    double s = 0.0;
    for (int j = 0; j < 256; ++j) s += hist[j] * std::abs(i - j);
    table[i] = s;
  }
  double mx = 0.0;
  for (int l : level) mx = std::max(mx, table[l]);
  std::vector<float> out(plane.size(), 0.0f);
  if (mx <= 0.0) return out;
  for (size_t i = 0; i < plane.size(); ++i) {
    out[i] = static_cast<float>(table[level[i]] / mx);
  }
  return out;
}

SaliencyWeights ComputeSaliencyWeights(const Tensor& x, const Tensor& y) {
  FSEG_CHECK(x.rank() == 4 && x.dim(1) == 1 && x.shape() == y.shape(),
             ErrorKind::kShapeMismatch,
             "saliency weights need aligned gray inputs: " + ShapeString(x.shape()) +
                 " vs " + ShapeString(y.shape()));
  const int n = x.dim(0);
  const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Buffer m1(x.numel()), m2(x.numel());
  for (int b = 0; b < n; ++b) {
    const auto sx = Vsm(x.values().subspan(b * hw, hw));
    const auto sy = Vsm(y.values().subspan(b * hw, hw));
    for (int64_t i = 0; i < hw; ++i) {
      const float w = 0.5f + 0.5f * (sx[i] - sy[i]);
      m1[b * hw + i] = w;
      m2[b * hw + i] = 1.0f - w;
    }
  }
  return {Tensor(x.shape(), std::move(m1)), Tensor(x.shape(), std::move(m2))};
}

Tensor LossMse(const Tensor& u, const Tensor& x, const Tensor& y,
               const SaliencyWeights& w, PixelLossForm form) {
  RequireAligned(u, x, y);
  FSEG_CHECK(w.m1.shape() == u.shape() && w.m2.shape() == u.shape(),
             ErrorKind::kShapeMismatch, "saliency weights do not match the images");
  if (form == PixelLossForm::kLiteral) {
    const Tensor tx = ops::Mul(w.m1, x), ty = ops::Mul(w.m2, y);
    return ops::Add(ops::Mean(ops::Square(ops::Sub(u, tx))),
                    ops::Mean(ops::Square(ops::Sub(u, ty))));
  }
  return ops::Add(ops::Mean(ops::Square(ops::Mul(w.m1, ops::Sub(u, x)))),
                  ops::Mean(ops::Square(ops::Mul(w.m2, ops::Sub(u, y)))));
}

Tensor DogGradient(const Tensor& img, int kernel) {
  FSEG_CHECK(kernel > 0 && kernel % 2 == 1, ErrorKind::kConfig,
             "gradient kernel size must be odd, got " + std::to_string(kernel));
  FSEG_CHECK(img.rank() == 4, ErrorKind::kShapeMismatch, "DoG expects NCHW");
  const int r = kernel / 2;
  const Tensor folded = FoldChannels(img);
  const Tensor padded = ops::Pad2d(folded, r, r, r, r, ops::PadMode::kReplicate);
  const Tensor blurred =
      ops::Conv2d(padded, GaussianKernel2d(kernel, DogSigma(kernel)), Tensor(), {});
  return ops::Reshape(ops::Sub(folded, blurred), img.shape());
}

Tensor LossGrad(const Tensor& u, const Tensor& x, const Tensor& y) {
  RequireAligned(u, x, y);
  Tensor total;
  for (int k : {3, 5, 7}) {
    Buffer target(u.numel());
    {
      NoGradGuard guard;
      const Tensor gx = DogGradient(x, k), gy = DogGradient(y, k);
      for (int64_t i = 0; i < u.numel(); ++i) {
        const float a = gx.at(i), b = gy.at(i);
        const float ma = std::abs(a), mb = std::abs(b);
        target[i] = ma > mb ? a : (mb > ma ? b : std::max(a, b));
      }
    }
    const Tensor t(u.shape(), std::move(target));
    const Tensor term = ops::Mean(ops::Square(ops::Sub(DogGradient(u, k), t)));
    total = total.defined() ? ops::Add(total, term) : term;
  }
  return total;
}

FusionLossTerms LossFusion(const Tensor& u, const Tensor& x, const Tensor& y, float eta,
                           PixelLossForm form) {
  FusionLossTerms t;
  t.ssim = LossSsim(u, x, y);
  t.mse = LossMse(u, x, y, ComputeSaliencyWeights(x, y), form);
  t.grad = LossGrad(u, x, y);
  t.total = ops::Add(ops::Add(t.ssim, t.mse), ops::Scale(t.grad, eta));
  return t;
}

Tensor LossSeg(const Tensor& logits, const std::vector<int>& labels, int ignore_index) {
  return ops::CrossEntropy(logits, labels, ignore_index);
}

}  // namespace fseg
