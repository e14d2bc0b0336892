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
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fseg/errors.hpp"
#include "fseg/losses.hpp"
#include "fseg/ops.hpp"
#include "support/oracles.hpp"

namespace fseg {
namespace {

using oracle::Agrees;
using oracle::CheckGradient;

Tensor Plane(const std::vector<float>& v, int h, int w) {
  return Tensor({1, 1, h, w}, ToBuffer(v));
}

std::vector<float> RandomPlane(int n, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.Uniform(lo, hi));
  return v;
}

void ExpectGradients(Tensor param, const std::function<Tensor()>& loss) {
  for (const auto& s : CheckGradient(param, loss, 8)) {
    EXPECT_TRUE(Agrees(s)) << "index " << s.index << " analytic " << s.analytic
                           << " numeric " << s.numeric;
  }
}

TEST(Ssim, IdenticalImagesScoreOne) {
  Rng rng(1);
  const Tensor a = Plane(RandomPlane(256, rng), 16, 16);
  EXPECT_NEAR(Ssim(a, a).item(), 1.0, 1e-6);
}

TEST(Ssim, ConstantPatchesMatchClosedForm) {
  const Tensor zero({1, 1, 16, 16}, 0.0f), one({1, 1, 16, 16}, 1.0f);
  EXPECT_NEAR(Ssim(zero, one).item(), kSsimC1 / (1.0 + kSsimC1), 1e-7);
}

TEST(Ssim, MatchesIndependentOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = RandomPlane(20 * 17, rng), b = RandomPlane(20 * 17, rng);
    EXPECT_NEAR(Ssim(Plane(a, 20, 17), Plane(b, 20, 17)).item(), oracle::Ssim(a, b, 20, 17),
                1e-5);
  }
}

TEST(LossSsim, ZeroWhenAllEqual) {
  Rng rng(3);
  const Tensor a = Plane(RandomPlane(144, rng), 12, 12);
  EXPECT_NEAR(LossSsim(a, a, a).item(), 0.0, 1e-6);
}

TEST(LossSsim, PerfectFirstTermLeavesHalfOfSecond) {
  Rng rng(4);
  const auto x = RandomPlane(256, rng), y = RandomPlane(256, rng);
  const Tensor tx = Plane(x, 16, 16), ty = Plane(y, 16, 16);
  EXPECT_NEAR(LossSsim(tx, tx, ty).item(), 0.5 * (1.0 - oracle::Ssim(x, y, 16, 16)), 1e-5);
}

TEST(LossSsim, MatchesCompositionalOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto u = RandomPlane(196, rng), x = RandomPlane(196, rng), y = RandomPlane(196, rng);
    const double expect =
        (1 - oracle::Ssim(u, x, 14, 14)) / 2 + (1 - oracle::Ssim(u, y, 14, 14)) / 2;
    EXPECT_NEAR(LossSsim(Plane(u, 14, 14), Plane(x, 14, 14), Plane(y, 14, 14)).item(), expect,
                1e-5);
  }
}

TEST(LossSsim, BlendedOutputsStayInUnitRange) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = RandomPlane(256, rng), y = RandomPlane(256, rng);
    const double t = rng.Uniform();
    std::vector<float> u(256);
    for (int i = 0; i < 256; ++i) u[i] = static_cast<float>(t * x[i] + (1 - t) * y[i]);
    const float l = LossSsim(Plane(u, 16, 16), Plane(x, 16, 16), Plane(y, 16, 16)).item();
    EXPECT_GE(l, 0.0f);
    EXPECT_LE(l, 1.0f);
  }
}

TEST(Vsm, ConstantImageGivesZeroMap) {
  const std::vector<float> v(64, 0.4f);
  for (float s : Vsm(v)) EXPECT_EQ(s, 0.0f);
}

TEST(Vsm, TwoLevelImageGivesOnes) {
  std::vector<float> v(64, 0.0f);
  for (int i = 0; i < 32; ++i) v[i * 2] = 1.0f;
  for (float s : Vsm(v)) EXPECT_FLOAT_EQ(s, 1.0f);
}

TEST(Vsm, MatchesHistogramOracle) {
  Rng rng(7);
  const auto v = RandomPlane(400, rng);
  const auto got = Vsm(v);
  const auto want = oracle::Vsm(v);
  for (size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-6);
}

TEST(SaliencyWeights, ConstantInputsGiveHalf) {
  const Tensor x({1, 1, 8, 8}, 0.2f), y({1, 1, 8, 8}, 0.7f);
  const auto w = ComputeSaliencyWeights(x, y);
  for (int i = 0; i < 64; ++i) {
    EXPECT_EQ(w.m1.at(i), 0.5f);
    EXPECT_EQ(w.m2.at(i), 0.5f);
  }
}

TEST(SaliencyWeights, EndpointsReachZeroAndOne) {
  std::vector<float> x(64, 0.0f);
  for (int i = 0; i < 32; ++i) x[i * 2] = 1.0f;
  const auto w = ComputeSaliencyWeights(Plane(x, 8, 8), Tensor({1, 1, 8, 8}, 0.3f));
  for (int i = 0; i < 64; ++i) {
    EXPECT_FLOAT_EQ(w.m1.at(i), 1.0f);
    EXPECT_FLOAT_EQ(w.m2.at(i), 0.0f);
  }
}

TEST(SaliencyWeights, SumToOneAndSwapAntisymmetrically) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = Plane(RandomPlane(2 * 100, rng), 20, 10);
    const Tensor y = Plane(RandomPlane(2 * 100, rng), 20, 10);
    const auto a = ComputeSaliencyWeights(x, y), b = ComputeSaliencyWeights(y, x);
    for (int i = 0; i < 200; ++i) {
      EXPECT_NEAR(a.m1.at(i) + a.m2.at(i), 1.0, 1e-6);
      EXPECT_NEAR(a.m1.at(i), b.m2.at(i), 1e-6);
      EXPECT_GE(a.m1.at(i), 0.0f);
      EXPECT_LE(a.m1.at(i), 1.0f);
    }
  }
}

TEST(SaliencyWeights, RejectsMismatchedShapes) {
  EXPECT_THROW(ComputeSaliencyWeights(Tensor({1, 1, 8, 8}), Tensor({1, 1, 8, 9})), Error);
}

SaliencyWeights ConstantWeights(const Shape& shape, float m1) {
  return {Tensor(shape, m1), Tensor(shape, 1.0f - m1)};
}

TEST(LossMse, ZeroAtExactReconstruction) {
  const Tensor z({1, 1, 8, 8}, 0.0f);
  EXPECT_EQ(LossMse(z, z, z, ConstantWeights(z.shape(), 0.5f)).item(), 0.0f);
}

TEST(LossMse, HandArithmetic) {
  const Tensor one({1, 1, 8, 8}, 1.0f);
  EXPECT_FLOAT_EQ(LossMse(one, one, one, ConstantWeights(one.shape(), 0.5f)).item(), 0.5f);
}

TEST(LossMse, DoublingResidualQuadruplesTerm) {
  Rng rng(9);
  const Tensor u({1, 1, 8, 8}, 0.0f);
  const Tensor x = Plane(RandomPlane(64, rng), 8, 8), y({1, 1, 8, 8}, 0.0f);
  const auto w = ComputeSaliencyWeights(x, y);
  const float base = LossMse(u, x, y, w).item();
  const float doubled = LossMse(u, ops::Scale(x, 2.0f), y, w).item();
  EXPECT_NEAR(doubled, 4 * base, 1e-5 * base);
}

TEST(LossMse, MaskedResidualForm) {
  const Tensor u({1, 1, 8, 8}, 0.5f), x({1, 1, 8, 8}, 1.0f), y({1, 1, 8, 8}, 0.0f);
  const auto w = ConstantWeights(u.shape(), 0.25f);
  const float expect = 0.25f * 0.25f * 0.25f + 0.75f * 0.75f * 0.25f;
  EXPECT_FLOAT_EQ(LossMse(u, x, y, w, PixelLossForm::kMaskedResidual).item(), expect);
}

TEST(Dog, ConstantImageGivesZeroMap) {
  const Tensor c({1, 1, 10, 10}, 0.6f);
  for (int k : {3, 5, 7}) {
    const Tensor d = DogGradient(c, k);
    for (int64_t i = 0; i < d.numel(); ++i) EXPECT_NEAR(d.at(i), 0.0f, 1e-6);
  }
}

TEST(Dog, HighPassMeanIsNearZero) {
  Rng rng(10);
  const Tensor img = Plane(RandomPlane(64 * 64, rng), 64, 64);
  for (int k : {3, 5, 7}) {
    const Tensor d = DogGradient(img, k);
    double s = 0;
    for (int64_t i = 0; i < d.numel(); ++i) s += d.at(i);
    EXPECT_LT(std::abs(s / d.numel()), 1e-3);
  }
}

TEST(Dog, IsLinear) {
  Rng rng(11);
  const Tensor a = Plane(RandomPlane(144, rng), 12, 12), b = Plane(RandomPlane(144, rng), 12, 12);
  const Tensor lhs = DogGradient(ops::Add(a, b), 5);
  const Tensor rhs = ops::Add(DogGradient(a, 5), DogGradient(b, 5));
  for (int64_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs.at(i), rhs.at(i), 1e-6);
}

TEST(Dog, MatchesIndependentBlur) {
  Rng rng(12);
  const auto v = RandomPlane(9 * 13, rng);
  for (int k : {3, 5, 7}) {
    const Tensor d = DogGradient(Plane(v, 9, 13), k);
    const auto ref = oracle::Dog(v, 9, 13, k);
    for (size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(d.at(i), ref[i], 1e-6);
  }
}

TEST(Dog, RejectsEvenKernels) {
  EXPECT_THROW(DogGradient(Tensor({1, 1, 8, 8}), 4), Error);
  EXPECT_THROW(DogGradient(Tensor({1, 1, 8, 8}), 0), Error);
}

TEST(LossGrad, ZeroWhenAllEqual) {
  Rng rng(13);
  const Tensor a = Plane(RandomPlane(64, rng), 8, 8);
  EXPECT_NEAR(LossGrad(a, a, a).item(), 0.0, 1e-9);
}

TEST(LossGrad, ConstantSecondInputReducesTargetToFirst) {
  Rng rng(14);
  const Tensor x = Plane(RandomPlane(64, rng), 8, 8);
  EXPECT_NEAR(LossGrad(x, x, Tensor({1, 1, 8, 8}, 0.3f)).item(), 0.0, 1e-9);
}

TEST(LossGrad, MatchesIndependentConvolutionOracle) {
  Rng rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    const auto u = RandomPlane(64, rng), x = RandomPlane(64, rng), y = RandomPlane(64, rng);
    const double want = oracle::LossGrad(u, x, y, 8, 8);
    EXPECT_NEAR(LossGrad(Plane(u, 8, 8), Plane(x, 8, 8), Plane(y, 8, 8)).item(), want,
                1e-5 * want);
  }
}

TEST(LossGrad, SymmetricInSources) {
  Rng rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor u = Plane(RandomPlane(100, rng), 10, 10), x = Plane(RandomPlane(100, rng), 10, 10),
                 y = Plane(RandomPlane(100, rng), 10, 10);
    EXPECT_EQ(LossGrad(u, x, y).item(), LossGrad(u, y, x).item());
  }
}

TEST(LossFusion, ZeroWhenAllEqual) {
  Rng rng(17);
  const Tensor a = Plane(RandomPlane(144, rng), 12, 12);
  EXPECT_NEAR(LossFusion(a, a, a, 0.5f, PixelLossForm::kMaskedResidual).total.item(), 0.0, 1e-6);
}

TEST(LossFusion, LiteralPixelTermKeepsHalfWeightedResidualWhenAllEqual) {
  Rng rng(23);
  const auto v = RandomPlane(144, rng);
  const Tensor a = Plane(v, 12, 12);
  const auto t = LossFusion(a, a, a, 0.5f);
  double want = 0;
  for (float p : v) want += 2.0 * (0.5 * p) * (0.5 * p) / 144.0;
  EXPECT_NEAR(t.ssim.item(), 0.0, 1e-6);
  EXPECT_NEAR(t.grad.item(), 0.0, 1e-9);
  EXPECT_NEAR(t.mse.item(), want, 1e-6);
  EXPECT_NEAR(t.total.item(), want, 1e-6);
}

TEST(LossFusion, TotalIsWeightedSumOfTerms) {
  Rng rng(18);
  const Tensor u = Plane(RandomPlane(144, rng), 12, 12), x = Plane(RandomPlane(144, rng), 12, 12),
               y = Plane(RandomPlane(144, rng), 12, 12);
  const auto t = LossFusion(u, x, y, 0.5f);
  EXPECT_NEAR(t.total.item(), t.ssim.item() + t.mse.item() + 0.5 * t.grad.item(), 1e-6);
  EXPECT_FLOAT_EQ(0.2f + 0.1f + 0.5f * 0.4f, 0.5f);
}

TEST(LossFusion, ZeroEtaIgnoresGradientTerm) {
  Rng rng(19);
  Tensor u = Plane(RandomPlane(144, rng), 12, 12);
  const Tensor x = Plane(RandomPlane(144, rng), 12, 12), y = Plane(RandomPlane(144, rng), 12, 12);
  u.set_requires_grad(true);
  LossFusion(u, x, y, 0.0f).total.Backward();
  const std::vector<float> full(u.grad().begin(), u.grad().end());
  u.ZeroGrad();
  ops::Add(LossSsim(u, x, y), LossMse(u, x, y, ComputeSaliencyWeights(x, y))).Backward();
  for (size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(full[i], u.grad()[i], 1e-7);
}

TEST(Losses, AreNonNegative) {
  Rng rng(20);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor u = Plane(RandomPlane(144, rng), 12, 12), x = Plane(RandomPlane(144, rng), 12, 12),
                 y = Plane(RandomPlane(144, rng), 12, 12);
    const auto t = LossFusion(u, x, y, 0.5f);
    EXPECT_GE(t.ssim.item(), 0.0f);
    EXPECT_GE(t.mse.item(), 0.0f);
    EXPECT_GE(t.grad.item(), 0.0f);
  }
}

class LossGradientTest : public ::testing::TestWithParam<int> {};

TEST_P(LossGradientTest, FiniteDifferencesAgreeOnTwelveByTwelve) {
  Rng rng(100 + GetParam());
  Tensor u = Plane(RandomPlane(144, rng, 0.1, 0.9), 12, 12);
  const Tensor x = Plane(RandomPlane(144, rng), 12, 12), y = Plane(RandomPlane(144, rng), 12, 12);
  const auto w = ComputeSaliencyWeights(x, y);
  ExpectGradients(u, [&] { return LossSsim(u, x, y); });
  ExpectGradients(u, [&] { return LossMse(u, x, y, w); });
  ExpectGradients(u, [&] { return LossGrad(u, x, y); });
}

INSTANTIATE_TEST_SUITE_P(Seeds, LossGradientTest, ::testing::Range(0, 3));

TEST(LossSeg, CertainPredictionGivesZero) {
  Tensor logits({1, 2, 1, 2}, 0.0f);
  logits.data()[0] = 100.0f;
  logits.data()[3] = 100.0f;
  EXPECT_NEAR(LossSeg(logits, {0, 1}, 255).item(), 0.0, 1e-6);
}

TEST(LossSeg, EqualLogitsGiveLogTwo) {
  EXPECT_NEAR(LossSeg(Tensor({1, 2, 1, 1}, 0.3f), {0}, 255).item(), 0.693147, 1e-6);
}

TEST(LossSeg, IgnoredPixelsContributeNothing) {
  Rng rng(21);
  Tensor a = oracle::RandomTensor({1, 3, 1, 2}, rng);
  Tensor b = oracle::RandomTensor({1, 3, 1, 2}, rng);
  for (int c = 0; c < 3; ++c) b.data()[c * 2] = a.at(c * 2);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tensor la = LossSeg(a, {2, 255}, 255), lb = LossSeg(b, {2, 255}, 255);
  EXPECT_EQ(la.item(), lb.item());
  la.Backward();
  lb.Backward();
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(a.grad()[c * 2], b.grad()[c * 2]);
    EXPECT_EQ(a.grad()[c * 2 + 1], 0.0f);
  }
}

TEST(LossSeg, AllIgnoredIsEmptyTarget) {
  try {
    LossSeg(Tensor({1, 2, 1, 2}), {255, 255}, 255);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyTarget);
  }
}

TEST(LossSeg, DecreasesAsTrueLogitGrows) {
  Rng rng(22);
  Tensor logits = oracle::RandomTensor({1, 4, 1, 1}, rng);
  float previous = LossSeg(logits, {2}, 255).item();
  for (int step = 0; step < 20; ++step) {
    logits.data()[2] += 0.5f;
    const float current = LossSeg(logits, {2}, 255).item();
    EXPECT_LT(current, previous);
    previous = current;
  }
}

}  // namespace
}  // namespace fseg
