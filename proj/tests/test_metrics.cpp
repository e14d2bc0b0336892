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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "fseg/errors.hpp"
#include "fseg/metrics.hpp"
#include "support/oracles.hpp"

namespace fseg {
namespace {

// Unit-range values kept away from the 8-bit rounding boundaries, so float
// and double quantization agree.
std::vector<float> QuantizedPlane(int n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) {
    const int level = rng.UniformInt(0, 255);
    const double jitter = rng.Uniform(-0.3, 0.3) / 255.0;
    x = static_cast<float>(std::clamp(level / 255.0 + jitter, 0.0, 1.0));
  }
  return v;
}

std::vector<int> RandomLabels(int n, int classes, Rng& rng, int ignore = -1) {
  std::vector<int> v(n);
  for (auto& x : v) x = (ignore >= 0 && rng.Uniform() < 0.1) ? ignore : rng.UniformInt(0, classes - 1);
  return v;
}

void ExpectRel(double got, double want, double rtol = 1e-6) {
  EXPECT_LE(std::abs(got - want), rtol * std::max(1.0, std::abs(want))) << got << " vs " << want;
}

TEST(Entropy, HandExamples) {
  EXPECT_EQ(Entropy(std::vector<float>(64, 0.3f)), 0.0);
  std::vector<float> two(64, 0.0f);
  std::fill(two.begin(), two.begin() + 32, 1.0f);
  EXPECT_DOUBLE_EQ(Entropy(two), 1.0);
  std::vector<float> all(512);
  for (int i = 0; i < 512; ++i) all[i] = static_cast<float>((i % 256) / 255.0);
  EXPECT_NEAR(Entropy(all), 8.0, 1e-12);
}

TEST(StdDev, HandExamples) {
  EXPECT_EQ(StdDev(std::vector<float>(16, 3.0f)), 0.0);
  std::vector<float> v(16, 0.0f);
  std::fill(v.begin(), v.begin() + 8, 255.0f);
  EXPECT_DOUBLE_EQ(StdDev(v), 127.5);
}

TEST(SpatialFrequency, HandExamples) {
  EXPECT_EQ(SpatialFrequency(std::vector<float>(16, 0.5f), 4, 4), 0.0);
  EXPECT_EQ(SpatialFrequency(std::vector<float>{0, 1, 0, 1}, 2, 2), 1.0);
}

TEST(SpatialFrequency, TransposeKeepsValue) {
  Rng rng(1);
  const auto v = QuantizedPlane(6 * 9, rng);
  std::vector<float> t(v.size());
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 9; ++x) t[x * 6 + y] = v[y * 9 + x];
  }
  EXPECT_NEAR(SpatialFrequency(v, 6, 9), SpatialFrequency(t, 9, 6), 1e-12);
}

TEST(Scd, AdditiveCaseGivesTwo) {
  const std::vector<float> x{0, 1, 0, 1}, y{0, 0, 1, 1}, u{0, 1, 1, 2};
  EXPECT_DOUBLE_EQ(Scd(u, x, y), 2.0);
}

TEST(Scd, ConstantDifferenceContributesZero) {
  const std::vector<float> x{0.1f, 0.7f, 0.4f, 0.9f}, y{0.3f, 0.2f, 0.8f, 0.5f};
  // u - y is constant, so only r(u - x, y) remains.
  std::vector<float> u(4);
  for (int i = 0; i < 4; ++i) u[i] = y[i];
  std::vector<float> ux(4);
  for (int i = 0; i < 4; ++i) ux[i] = u[i] - x[i];
  EXPECT_NEAR(Scd(u, x, y), oracle::Pearson(ux, y), 1e-12);
}

TEST(Scd, BoundedByTwo) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto u = QuantizedPlane(16, rng), x = QuantizedPlane(16, rng), y = QuantizedPlane(16, rng);
    EXPECT_LE(std::abs(Scd(u, x, y)), 2.0 + 1e-12);
  }
}

TEST(FusionMetrics, MatchBruteForceOnRandomInstances) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto u = QuantizedPlane(256, rng), x = QuantizedPlane(256, rng),
               y = QuantizedPlane(256, rng);
    ExpectRel(Entropy(u), oracle::Entropy(u));
    ExpectRel(StdDev(u), oracle::StdDev(u));
    ExpectRel(SpatialFrequency(u, 16, 16), oracle::SpatialFrequency(u, 16, 16));
    ExpectRel(Scd(u, x, y), oracle::Scd(u, x, y));
  }
}

TEST(FusionMetrics, PermutationBehaviour) {
  Rng rng(4);
  auto v = QuantizedPlane(256, rng);
  const double en = Entropy(v), sd = StdDev(v), sf = SpatialFrequency(v, 16, 16);
  bool sf_changed = false;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    rng.Shuffle(order);
    std::vector<float> p(v.size());
    for (size_t i = 0; i < v.size(); ++i) p[i] = v[order[i]];
    EXPECT_EQ(Entropy(p), en);
    EXPECT_NEAR(StdDev(p), sd, 1e-9);
    sf_changed |= std::abs(SpatialFrequency(p, 16, 16) - sf) > 1e-6;
  }
  EXPECT_TRUE(sf_changed);
}

TEST(FusionMetrics, ScoreFusionUsesEightBitScale) {
  Image u(8, 8, 1, ColorSpace::kGray), x(8, 8, 1, ColorSpace::kGray), y(8, 8, 1, ColorSpace::kGray);
  for (int i = 0; i < 64; ++i) {
    u.pixels[i] = (i % 2) ? 1.0f : 0.0f;
    x.pixels[i] = (i % 3) / 2.0f;
    y.pixels[i] = (i % 5) / 4.0f;
  }
  const auto s = ScoreFusion(u, x, y, "a");
  EXPECT_EQ(s.id, "a");
  EXPECT_DOUBLE_EQ(s.en, 1.0);
  EXPECT_DOUBLE_EQ(s.sd, 127.5);
  EXPECT_NEAR(s.sf, 255.0, 1e-9);
  EXPECT_NEAR(s.scd, oracle::Scd(u.pixels, x.pixels, y.pixels), 1e-9);
}

TEST(Confusion, HandCounts) {
  ConfusionMatrix cm(2);
  cm.Add(std::vector<int>{0, 1, 1, 1}, std::vector<int>{0, 0, 1, 1}, 255);
  EXPECT_EQ(cm.at(0, 0), 1);
  EXPECT_EQ(cm.at(0, 1), 1);
  EXPECT_EQ(cm.at(1, 0), 0);
  EXPECT_EQ(cm.at(1, 1), 2);
  const auto s = ScoreSegmentation(cm);
  EXPECT_DOUBLE_EQ(s.acc[0], 0.5);
  EXPECT_DOUBLE_EQ(s.acc[1], 1.0);
  EXPECT_DOUBLE_EQ(s.iou[0], 0.5);
  EXPECT_DOUBLE_EQ(s.iou[1], 2.0 / 3.0);
}

TEST(Confusion, PerfectPredictionIsDiagonal) {
  Rng rng(5);
  const auto gt = RandomLabels(100, 4, rng);
  ConfusionMatrix cm(4);
  cm.Add(gt, gt, 255);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      if (a != b) {
        EXPECT_EQ(cm.at(a, b), 0);
      }
    }
  }
  const auto s = ScoreSegmentation(cm);
  EXPECT_EQ(s.miou, 1.0);
  EXPECT_EQ(s.macc, 1.0);
  for (int c = 0; c < 4; ++c) {
    EXPECT_EQ(s.acc[c], 1.0);
    EXPECT_EQ(s.iou[c], 1.0);
  }
}

TEST(Confusion, IgnoredPixelsLeaveZeroMatrix) {
  ConfusionMatrix cm(3);
  cm.Add(std::vector<int>{0, 1, 2}, std::vector<int>{255, 255, 255}, 255);
  EXPECT_EQ(cm.total(), 0);
  try {
    ScoreSegmentation(cm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyMatrix);
  }
}

TEST(Confusion, AllClassZeroPrediction) {
  ConfusionMatrix cm(2);
  cm.Add(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 0, 1, 1}, 255);
  const auto s = ScoreSegmentation(cm);
  EXPECT_EQ(s.iou[0], 0.5);
  EXPECT_EQ(s.iou[1], 0.0);
  EXPECT_EQ(s.miou, 0.25);
}

TEST(Confusion, MergeAddsCounts) {
  Rng rng(6);
  const auto p1 = RandomLabels(50, 3, rng), g1 = RandomLabels(50, 3, rng);
  const auto p2 = RandomLabels(50, 3, rng), g2 = RandomLabels(50, 3, rng);
  ConfusionMatrix a(3), b(3), all(3);
  a.Add(p1, g1, 255);
  b.Add(p2, g2, 255);
  all.Add(p1, g1, 255);
  all.Add(p2, g2, 255);
  a.Merge(b);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(a.at(i, j), all.at(i, j));
  }
}

TEST(SegmentationMetrics, MatchBruteForceOnRandomInstances) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int classes = rng.UniformInt(2, 6);
    const auto gt = RandomLabels(256, classes, rng, 255);
    auto pred = RandomLabels(256, classes, rng);
    for (size_t i = 0; i < pred.size(); ++i) {
      if (gt[i] != 255 && rng.Uniform() < 0.6) pred[i] = gt[i];
    }
    ConfusionMatrix cm(classes);
    cm.Add(pred, gt, 255);
    const auto got = ScoreSegmentation(cm);
    const auto want = oracle::SegmentationScores(pred, gt, classes, 255);
    for (int c = 0; c < classes; ++c) {
      EXPECT_EQ(std::isnan(got.acc[c]), std::isnan(want.acc[c]));
      if (!std::isnan(want.acc[c])) {
        ExpectRel(got.acc[c], want.acc[c]);
      }
      EXPECT_EQ(std::isnan(got.iou[c]), std::isnan(want.iou[c]));
      if (!std::isnan(want.iou[c])) {
        ExpectRel(got.iou[c], want.iou[c]);
      }
    }
    ExpectRel(got.macc, want.macc);
    ExpectRel(got.miou, want.miou);
  }
}

TEST(SegmentationMetrics, MiouInvariantToClassRelabeling) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gt = RandomLabels(256, 5, rng, 255);
    const auto pred = RandomLabels(256, 5, rng);
    std::vector<int> perm{0, 1, 2, 3, 4};
    rng.Shuffle(perm);
    auto relabel = [&](std::vector<int> v) {
      for (auto& x : v) {
        if (x != 255) x = perm[x];
      }
      return v;
    };
    ConfusionMatrix a(5), b(5);
    a.Add(pred, gt, 255);
    b.Add(relabel(pred), relabel(gt), 255);
    EXPECT_NEAR(ScoreSegmentation(a).miou, ScoreSegmentation(b).miou, 1e-12);
  }
}

TEST(MetricsCsv, FixedColumns) {
  std::ostringstream fusion, seg;
  WriteFusionCsv(fusion, {{"00001", 7.0, 40.0, 12.0, 1.5}});
  EXPECT_EQ(fusion.str().substr(0, fusion.str().find('\n')), "id,en,sd,sf,scd");
  ConfusionMatrix cm(2);
  cm.Add(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 255);
  WriteSegmentationCsv(seg, ScoreSegmentation(cm));
  EXPECT_EQ(seg.str(), "class,acc,iou\n0,1,1\n1,1,1\nmean,1,1\n");
}

}  // namespace
}  // namespace fseg
