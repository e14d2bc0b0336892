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
#include "fseg/hia.hpp"
#include "support/oracles.hpp"

namespace fseg {
namespace {

using Mat = std::vector<std::vector<double>>;
using oracle::Agrees;
using oracle::CheckGradient;
using oracle::RandomTensor;

// Token-matrix formulation: rows are the H*W positions of batch item b.
Mat Tokens(const Tensor& t, int b) {
  const int c = t.dim(1), n = t.dim(2) * t.dim(3);
  Mat m(n, std::vector<double>(c));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) m[i][j] = t.at((static_cast<int64_t>(b) * c + j) * n + i);
  }
  return m;
}

Mat Project(const Mat& x, const nn::Linear& l) {
  const int out = l.out_features(), in = l.in_features();
  Mat y(x.size(), std::vector<double>(out));
  for (size_t t = 0; t < x.size(); ++t) {
    for (int o = 0; o < out; ++o) {
      double s = l.bias.at(o);
      for (int i = 0; i < in; ++i) s += l.weight.at(o * in + i) * x[t][i];
      y[t][o] = s;
    }
  }
  return y;
}

// Per-head K_h^T V_h / N placed on the diagonal blocks.
Mat Context(const Mat& k, const Mat& v, int heads) {
  const int c = static_cast<int>(k[0].size()), d = c / heads;
  const double n = static_cast<double>(k.size());
  Mat g(c, std::vector<double>(c, 0.0));
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) {
      if (i / d != j / d) continue;
      for (size_t t = 0; t < k.size(); ++t) g[i][j] += k[t][i] * v[t][j];
      g[i][j] /= n;
    }
  }
  return g;
}

Mat Product(const Mat& a, const Mat& b) {
  Mat y(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < b[0].size(); ++j) {
      for (size_t k = 0; k < b.size(); ++k) y[i][j] += a[i][k] * b[k][j];
    }
  }
  return y;
}

Mat Join(const Mat& a, const Mat& b) {
  Mat y = a;
  for (size_t i = 0; i < a.size(); ++i) y[i].insert(y[i].end(), b[i].begin(), b[i].end());
  return y;
}

Mat Gelu(Mat m) {
  for (auto& row : m) {
    for (double& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  }
  return m;
}

struct BlockOracle {
  Mat ir, vis;
};

BlockOracle RunOracle(HiaBlock& block, const Tensor& f_ir, const Tensor& f_vis,
                      const Tensor& f_seg, int b) {
  const HiaConfig& cfg = block.config();
  const HiaProjections& p = block.projections();
  const Mat xs = Project(Tokens(f_seg, b), block.embed_seg_semantic());
  const Mat xi = Project(Tokens(f_ir, b), block.embed_ir_modality());
  const Mat xv = Project(Tokens(f_vis, b), block.embed_vis_modality());
  const Mat g_ir = Context(Project(xi, p.k_ir), Project(xi, p.v_ir), cfg.heads);
  const Mat g_vis = Context(Project(xv, p.k_vis), Project(xv, p.v_vis), cfg.heads);
  const Mat g_s = Context(Project(xs, p.k_seg), Project(xs, p.v_seg), cfg.heads);
  const Mat qs = Project(xs, p.q_seg);
  const Mat s_ir = Product(qs, g_ir), s_vis = Product(qs, g_vis);
  const Mat m_ir = Product(Project(xi, p.q_ir), g_s), m_vis = Product(Project(xv, p.q_vis), g_s);
  auto mlp = [&](const HiaBlock::Mlp& m, const Mat& s, const Mat& a, const Mat& f) {
    Mat h = Project(Join(s, a), m.fc1);
    if (cfg.mlp_activation) h = Gelu(h);
    Mat out = Project(h, m.fc2);
    for (size_t t = 0; t < out.size(); ++t) {
      for (size_t j = 0; j < out[t].size(); ++j) out[t][j] += f[t][j];
    }
    return out;
  };
  return {mlp(block.mlp_ir(), s_ir, m_ir, Tokens(f_ir, b)),
          mlp(block.mlp_vis(), s_vis, m_vis, Tokens(f_vis, b))};
}

std::vector<nn::Linear*> AllLinears(HiaBlock& block) {
  HiaProjections& p = block.projections();
  return {&block.embed_seg_semantic(), &block.embed_ir_modality(), &block.embed_vis_modality(),
          &p.q_seg, &p.k_seg, &p.v_seg, &p.q_ir, &p.k_ir, &p.v_ir, &p.q_vis, &p.k_vis, &p.v_vis,
          &block.mlp_ir().fc1, &block.mlp_ir().fc2, &block.mlp_vis().fc1, &block.mlp_vis().fc2};
}

void FillIntegers(Tensor& t, Rng& rng, int lo, int hi) {
  for (float& v : t.values()) v = static_cast<float>(rng.UniformInt(lo, hi));
}

void RandomizeWeights(HiaBlock& block, Rng& rng, bool integers) {
  for (nn::Linear* l : AllLinears(block)) {
    for (Tensor* t : {&l->weight, &l->bias}) {
      if (integers) {
        FillIntegers(*t, rng, -2, 2);
      } else {
        for (float& v : t->values()) v = static_cast<float>(rng.Uniform(-0.5, 0.5));
      }
    }
  }
}

Tensor Channels(const std::vector<std::vector<float>>& rows) {
  // rows[token][channel] -> [1, C, 1, N].
  const int n = static_cast<int>(rows.size()), c = static_cast<int>(rows[0].size());
  Tensor t({1, c, 1, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) t.data()[j * n + i] = rows[i][j];
  }
  return t;
}

TEST(HiaTokens, ZeroFeatureWithZeroBiasGivesZeroTokens) {
  Rng rng(1);
  nn::Linear a(8, 16, nn::Init::kXavier, rng), b(8, 16, nn::Init::kXavier, rng);
  const TokenPair p = EmbedTokens(Tensor({1, 8, 4, 4}), a, b);
  EXPECT_EQ(p.semantic.shape(), (Shape{1, 16, 4, 4}));
  EXPECT_EQ(p.modality.shape(), (Shape{1, 16, 4, 4}));
  for (float v : p.semantic.values()) EXPECT_EQ(v, 0.0f);
  for (float v : p.modality.values()) EXPECT_EQ(v, 0.0f);
}

TEST(HiaTokens, IdentityProjectionCopiesInput) {
  Rng rng(2);
  nn::Linear sem(8, 8, nn::Init::kXavier, rng), mod(8, 8, nn::Init::kZero, rng);
  for (int i = 0; i < 8; ++i) mod.weight.data()[i * 8 + i] = 1.0f;
  const Tensor f = RandomTensor({2, 8, 3, 3}, rng);
  const TokenPair p = EmbedTokens(f, sem, mod);
  EXPECT_EQ(std::vector<float>(p.modality.values().begin(), p.modality.values().end()),
            std::vector<float>(f.values().begin(), f.values().end()));
}

TEST(HiaTokens, MismatchedWidthIsRejected) {
  Rng rng(3);
  nn::Linear l(6, 4, nn::Init::kXavier, rng);
  EXPECT_THROW(Embed(Tensor({1, 5, 2, 2}), l), Error);
}

TEST(GlobalContext, HandMatrixProduct) {
  const Tensor k = Channels({{1, 0}, {0, 1}}), v = Channels({{2, 3}, {4, 5}});
  const Tensor g = GlobalContext(k, v, 1, false);
  ASSERT_EQ(g.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(g.at(0), 1.0f);
  EXPECT_EQ(g.at(1), 1.5f);
  EXPECT_EQ(g.at(2), 2.0f);
  EXPECT_EQ(g.at(3), 2.5f);
}

TEST(GlobalContext, ZeroValuesGiveZeroContext) {
  Rng rng(4);
  const Tensor g = GlobalContext(RandomTensor({2, 4, 3, 3}, rng), Tensor({2, 4, 3, 3}), 2, false);
  for (float x : g.values()) EXPECT_EQ(x, 0.0f);
}

TEST(GlobalContext, LinearInValues) {
  Rng rng(5);
  const Tensor k = RandomTensor({1, 6, 2, 3}, rng), a = RandomTensor({1, 6, 2, 3}, rng),
               b = RandomTensor({1, 6, 2, 3}, rng);
  const Tensor lhs = GlobalContext(k, ops::Add(ops::Scale(a, 2.0f), b), 3, false);
  const Tensor rhs = ops::Add(ops::Scale(GlobalContext(k, a, 3, false), 2.0f),
                              GlobalContext(k, b, 3, false));
  for (int64_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs.at(i), rhs.at(i), 1e-5);
}

TEST(GlobalContext, HeadsDecomposeIntoChannelSlices) {
  Rng rng(6);
  const Tensor k = RandomTensor({2, 6, 2, 2}, rng), v = RandomTensor({2, 6, 2, 2}, rng);
  const Tensor g = GlobalContext(k, v, 3, false);
  for (int h = 0; h < 3; ++h) {
    const Tensor gh = GlobalContext(ops::Narrow(k, 1, 2 * h, 2), ops::Narrow(v, 1, 2 * h, 2), 1, false);
    for (int b = 0; b < 2; ++b) {
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          const float got = g.at((b * 6 + i) * 6 + j);
          if (i / 2 == h && j / 2 == h) {
            EXPECT_NEAR(got, gh.at((b * 2 + i % 2) * 2 + j % 2), 1e-6);
          } else if (i / 2 != j / 2) {
            EXPECT_EQ(got, 0.0f);
          }
        }
      }
    }
  }
}

TEST(GlobalContext, KeySoftmaxNormalizesEachKeyChannel) {
  Rng rng(7);
  const Tensor k = RandomTensor({1, 2, 2, 2}, rng);
  const Tensor ones({1, 2, 2, 2}, 1.0f);
  const Tensor g = GlobalContext(k, ones, 1, true);
  for (float x : g.values()) EXPECT_NEAR(x, 1.0f, 1e-6);
}

TEST(ApplyContext, HandExamples) {
  const Tensor q = Channels({{1, 0}});
  const Tensor id({1, 2, 2}, ToBuffer({1, 0, 0, 1}));
  const Tensor s = ApplyContext(q, id);
  EXPECT_EQ(s.at(0), 1.0f);
  EXPECT_EQ(s.at(1), 0.0f);
  const Tensor m = ApplyContext(Channels({{0, 1}}), Tensor({1, 2, 2}, ToBuffer({1, 2, 3, 4})));
  EXPECT_EQ(m.at(0), 3.0f);
  EXPECT_EQ(m.at(1), 4.0f);
}

HiaConfig SmallConfig(int channels, int heads, bool activation) {
  HiaConfig c;
  c.channels = channels;
  c.heads = heads;
  c.mlp_activation = activation;
  return c;
}

TEST(Soam, ZeroQueryProjectionGivesZero) {
  Rng rng(8);
  HiaBlock block(4, 4, SmallConfig(4, 1, true), rng);
  block.projections().q_seg = nn::Linear(4, 4, nn::Init::kZero, rng);
  const Tensor a = RandomTensor({1, 4, 2, 2}, rng), b = RandomTensor({1, 4, 2, 2}, rng),
               c = RandomTensor({1, 4, 2, 2}, rng);
  const AttentionPair s = Soam(a, b, c, block.projections(), block.config());
  for (float x : s.ir.values()) EXPECT_EQ(x, 0.0f);
  for (float x : s.vis.values()) EXPECT_EQ(x, 0.0f);
}

TEST(Moam, ZeroSemanticTokensGiveZero) {
  Rng rng(9);
  HiaBlock block(4, 4, SmallConfig(4, 2, true), rng);
  for (nn::Linear* l : {&block.projections().k_seg, &block.projections().v_seg}) {
    l->bias = Tensor({4});
  }
  const Tensor zero({1, 4, 2, 2}), b = RandomTensor({1, 4, 2, 2}, rng);
  const AttentionPair m = Moam(zero, b, b, block.projections(), block.config());
  for (float x : m.ir.values()) EXPECT_EQ(x, 0.0f);
  for (float x : m.vis.values()) EXPECT_EQ(x, 0.0f);
}

TEST(Soam, IntegerTokensMatchBruteForceExactly) {
  Rng rng(10);
  HiaBlock block(2, 2, SmallConfig(2, 1, false), rng);
  RandomizeWeights(block, rng, true);
  Tensor seg({1, 2, 1, 2}), ir({1, 2, 1, 2}), vis({1, 2, 1, 2});
  for (Tensor* t : {&seg, &ir, &vis}) FillIntegers(*t, rng, -3, 3);
  const HiaProjections& p = block.projections();
  const AttentionPair s = Soam(seg, ir, vis, p, block.config());
  const Mat qs = Project(Tokens(seg, 0), p.q_seg);
  const Mat want_ir = Product(qs, Context(Project(Tokens(ir, 0), p.k_ir), Project(Tokens(ir, 0), p.v_ir), 1));
  const Mat want_vis =
      Product(qs, Context(Project(Tokens(vis, 0), p.k_vis), Project(Tokens(vis, 0), p.v_vis), 1));
  const Mat got_ir = Tokens(s.ir, 0), got_vis = Tokens(s.vis, 0);
  for (int t = 0; t < 2; ++t) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_EQ(got_ir[t][j], want_ir[t][j]);
      EXPECT_EQ(got_vis[t][j], want_vis[t][j]);
    }
  }
}

TEST(HiaBlock, ZeroOutputLayersGiveExactIdentity) {
  Rng rng(11);
  HiaBlock block(16, 8, SmallConfig(8, 2, true), rng);
  const Tensor ir = RandomTensor({1, 16, 8, 8}, rng), vis = RandomTensor({1, 16, 8, 8}, rng),
               seg = RandomTensor({1, 8, 8, 8}, rng);
  const auto [oi, ov] = block.Forward(ir, vis, seg);
  EXPECT_EQ(oi.shape(), ir.shape());
  EXPECT_EQ(ov.shape(), vis.shape());
  for (int64_t i = 0; i < ir.numel(); ++i) {
    EXPECT_EQ(oi.at(i), ir.at(i));
    EXPECT_EQ(ov.at(i), vis.at(i));
  }
}

TEST(HiaBlock, IntegerWeightsMatchEndToEndOracleExactly) {
  Rng rng(12);
  HiaBlock block(2, 2, SmallConfig(2, 1, false), rng);
  RandomizeWeights(block, rng, true);
  Tensor ir({1, 2, 2, 1}), vis({1, 2, 2, 1}), seg({1, 2, 2, 1});
  for (Tensor* t : {&ir, &vis, &seg}) FillIntegers(*t, rng, -2, 2);
  const auto [oi, ov] = block.Forward(ir, vis, seg);
  const BlockOracle want = RunOracle(block, ir, vis, seg, 0);
  const Mat gi = Tokens(oi, 0), gv = Tokens(ov, 0);
  for (int t = 0; t < 2; ++t) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_EQ(gi[t][j], want.ir[t][j]);
      EXPECT_EQ(gv[t][j], want.vis[t][j]);
    }
  }
}

TEST(HiaBlock, RandomWeightsMatchOracleWithActivation) {
  Rng rng(13);
  HiaBlock block(6, 5, SmallConfig(4, 2, true), rng);
  RandomizeWeights(block, rng, false);
  const Tensor ir = RandomTensor({2, 6, 3, 4}, rng), vis = RandomTensor({2, 6, 3, 4}, rng),
               seg = RandomTensor({2, 5, 3, 4}, rng);
  const auto [oi, ov] = block.Forward(ir, vis, seg);
  for (int b = 0; b < 2; ++b) {
    const BlockOracle want = RunOracle(block, ir, vis, seg, b);
    const Mat gi = Tokens(oi, b), gv = Tokens(ov, b);
    for (size_t t = 0; t < gi.size(); ++t) {
      for (size_t j = 0; j < gi[t].size(); ++j) {
        EXPECT_NEAR(gi[t][j], want.ir[t][j], 1e-5);
        EXPECT_NEAR(gv[t][j], want.vis[t][j], 1e-5);
      }
    }
  }
}

TEST(HiaBlock, DiagnosticsReportPerHeadNorms) {
  Rng rng(14);
  HiaBlock block(4, 4, SmallConfig(4, 2, true), rng);
  HiaDiagnostics d;
  const Tensor x = RandomTensor({1, 4, 3, 3}, rng);
  block.Forward(x, x, x, &d);
  for (const auto* v : {&d.soam_ir, &d.soam_vis, &d.moam_ir, &d.moam_vis}) {
    ASSERT_EQ(v->size(), 2u);
    for (float n : *v) EXPECT_GE(n, 0.0f);
  }
}

TEST(HiaBlock, UnusedTokenEmbeddingsAreRegisteredOnlyWhenAsked) {
  Rng rng(15);
  nn::ParamSet plain, extra;
  HiaBlock(4, 4, SmallConfig(4, 1, true), rng).Register(plain, "h");
  HiaConfig c = SmallConfig(4, 1, true);
  c.embed_unused_tokens = true;
  HiaBlock(4, 4, c, rng).Register(extra, "h");
  EXPECT_EQ(extra.size(), plain.size() + 6);
}

TEST(HiaBlock, InvalidHeadSplitIsConfigError) {
  EXPECT_THROW(ValidateHiaConfig(SmallConfig(6, 4, true)), Error);
}

TEST(HiaBlock, ShapeMismatchIsRejected) {
  Rng rng(16);
  HiaBlock block(4, 4, SmallConfig(4, 1, true), rng);
  EXPECT_THROW(block.Forward(Tensor({1, 4, 3, 3}), Tensor({1, 4, 3, 3}), Tensor({1, 4, 2, 3})),
               Error);
}

class HiaGradientTest : public ::testing::TestWithParam<bool> {};

TEST_P(HiaGradientTest, EveryWeightClassMatchesFiniteDifferences) {
  Rng rng(17);
  HiaConfig c = SmallConfig(4, 2, true);
  c.key_softmax = GetParam();
  HiaBlock block(3, 5, c, rng);
  for (HiaBlock::Mlp* m : {&block.mlp_ir(), &block.mlp_vis()}) {
    for (float& v : m->fc2.weight.values()) v = static_cast<float>(rng.Uniform(-0.5, 0.5));
  }
  Tensor ir = RandomTensor({1, 3, 3, 3}, rng), vis = RandomTensor({1, 3, 3, 3}, rng),
         seg = RandomTensor({1, 5, 3, 3}, rng);
  const Tensor pi = RandomTensor(ir.shape(), rng), pv = RandomTensor(vis.shape(), rng);
  auto loss = [&] {
    auto [oi, ov] = block.Forward(ir, vis, seg);
    return ops::Add(ops::Sum(ops::Mul(oi, pi)), ops::Sum(ops::Mul(ov, pv)));
  };
  HiaProjections& p = block.projections();
  std::vector<Tensor> targets{ir, vis, seg,
                              block.embed_seg_semantic().weight, block.embed_ir_modality().weight,
                              p.q_seg.weight, p.k_ir.weight, p.v_vis.weight, p.q_ir.weight,
                              p.k_seg.weight, p.v_seg.bias,
                              block.mlp_ir().fc1.weight, block.mlp_vis().fc2.weight,
                              block.mlp_ir().fc2.bias};
  for (Tensor& t : targets) {
    for (const auto& s : CheckGradient(t, loss, 4)) {
      EXPECT_TRUE(Agrees(s)) << "index " << s.index << " analytic " << s.analytic
                             << " numeric " << s.numeric;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(KeyModes, HiaGradientTest, ::testing::Bool());

}  // namespace
}  // namespace fseg
