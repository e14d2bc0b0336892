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
#include "fseg/hia.hpp"

#include <cmath>

#include "fseg/errors.hpp"

namespace fseg {

using nn::Init;

void ValidateHiaConfig(const HiaConfig& c) {
  FSEG_CHECK(c.channels > 0 && c.heads > 0, ErrorKind::kConfig,
             "hia: channels and heads must be positive");
  FSEG_CHECK(c.channels % c.heads == 0, ErrorKind::kConfig,
             "hia: channels must be divisible by heads");
}

Tensor Embed(const Tensor& feature, const nn::Linear& embedding) {
  FSEG_CHECK(feature.rank() == 4 && feature.dim(1) == embedding.in_features(),
             ErrorKind::kShapeMismatch,
             "token embedding: feature " + ShapeString(feature.shape()) +
                 " does not match embedding input width " +
                 std::to_string(embedding.in_features()));
  return ops::ChannelLinear(feature, embedding.weight, embedding.bias);
}

TokenPair EmbedTokens(const Tensor& feature, const nn::Linear& semantic,
                      const nn::Linear& modality) {
  FSEG_CHECK(semantic.in_features() == modality.in_features(), ErrorKind::kShapeMismatch,
             "token embeddings disagree on input width");
  return {Embed(feature, semantic), Embed(feature, modality)};
}

Tensor HeadMask(int batch, int channels, int heads) {
  FSEG_CHECK(heads > 0 && channels % heads == 0, ErrorKind::kConfig,
             "channels must be divisible by heads");
  const int d = channels / heads;
  Tensor mask({batch, channels, channels});
  float* m = mask.data();
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < channels; ++i) {
      for (int j = 0; j < channels; ++j) {
        m[(static_cast<int64_t>(b) * channels + i) * channels + j] = i / d == j / d ? 1.0f : 0.0f;
      }
    }
  }
  return mask;
}

Tensor GlobalContext(const Tensor& k, const Tensor& v, int heads, bool key_softmax) {
  FSEG_CHECK(k.rank() == 4 && k.shape() == v.shape(), ErrorKind::kShapeMismatch,
             "GlobalContext: K " + ShapeString(k.shape()) + " vs V " +
                 ShapeString(v.shape()));
  const int b = k.dim(0), c = k.dim(1);
  const Tensor mask = HeadMask(b, c, heads);
  if (key_softmax) {
    // Normalize each key channel over the token axis.
    const Tensor kn = ops::Softmax(ops::Reshape(k, {b, c, k.dim(2) * k.dim(3)}));
    return ops::Mul(ops::ChannelGram(kn, v), mask);
  }
  const float inv_n = 1.0f / static_cast<float>(k.dim(2) * k.dim(3));
  return ops::Mul(ops::Scale(ops::ChannelGram(k, v), inv_n), mask);
}

Tensor ApplyContext(const Tensor& q, const Tensor& context) {
  return ops::ChannelMix(context, q);
}

namespace {

void RequireTokens(const Tensor& a, const Tensor& b, const Tensor& c) {
  FSEG_CHECK(a.rank() == 4 && a.shape() == b.shape() && a.shape() == c.shape(),
             ErrorKind::kShapeMismatch,
             "attention tokens disagree: " + ShapeString(a.shape()) + ", " +
                 ShapeString(b.shape()) + ", " + ShapeString(c.shape()));
}

}  // namespace

AttentionPair Soam(const Tensor& seg, const Tensor& ir, const Tensor& vis,
                   const HiaProjections& p, const HiaConfig& config) {
  RequireTokens(seg, ir, vis);
  Tensor q = Embed(seg, p.q_seg);
  Tensor g_ir =
      GlobalContext(Embed(ir, p.k_ir), Embed(ir, p.v_ir), config.heads, config.key_softmax);
  Tensor g_vis =
      GlobalContext(Embed(vis, p.k_vis), Embed(vis, p.v_vis), config.heads, config.key_softmax);
  return {ApplyContext(q, g_ir), ApplyContext(q, g_vis)};
}

AttentionPair Moam(const Tensor& seg, const Tensor& ir, const Tensor& vis,
                   const HiaProjections& p, const HiaConfig& config) {
  RequireTokens(seg, ir, vis);
  Tensor g_seg =
      GlobalContext(Embed(seg, p.k_seg), Embed(seg, p.v_seg), config.heads, config.key_softmax);
  return {ApplyContext(Embed(ir, p.q_ir), g_seg), ApplyContext(Embed(vis, p.q_vis), g_seg)};
}

HiaBlock::HiaBlock(int modality_channels, int semantic_channels, const HiaConfig& config,
                   Rng& rng)
    : config_(config) {
  ValidateHiaConfig(config);
  const int c = config.channels;
  seg_semantic_ = nn::Linear(semantic_channels, c, Init::kXavier, rng);
  ir_modality_ = nn::Linear(modality_channels, c, Init::kXavier, rng);
  vis_modality_ = nn::Linear(modality_channels, c, Init::kXavier, rng);
  if (config.embed_unused_tokens) {
    seg_modality_ = nn::Linear(semantic_channels, c, Init::kXavier, rng);
    ir_semantic_ = nn::Linear(modality_channels, c, Init::kXavier, rng);
    vis_semantic_ = nn::Linear(modality_channels, c, Init::kXavier, rng);
  }
  for (nn::Linear* l : {&proj_.q_seg, &proj_.k_seg, &proj_.v_seg, &proj_.q_ir, &proj_.k_ir,
                        &proj_.v_ir, &proj_.q_vis, &proj_.k_vis, &proj_.v_vis}) {
    *l = nn::Linear(c, c, Init::kXavier, rng);
  }
  for (Mlp* m : {&mlp_ir_, &mlp_vis_}) {
    m->fc1 = nn::Linear(2 * c, c, Init::kXavier, rng);
    // Zero output layer: the block starts as an exact identity.
    m->fc2 = nn::Linear(c, modality_channels, Init::kZero, rng);
  }
}

Tensor HiaBlock::MlpForward(const Mlp& mlp, const Tensor& s, const Tensor& m) const {
  Tensor h = Embed(ops::Concat({s, m}, 1), mlp.fc1);
  if (config_.mlp_activation) h = ops::Gelu(h);
  return Embed(h, mlp.fc2);
}

std::pair<Tensor, Tensor> HiaBlock::Forward(const Tensor& f_ir, const Tensor& f_vis,
                                            const Tensor& f_seg, HiaDiagnostics* diag) const {
  FSEG_CHECK(f_ir.rank() == 4 && f_ir.shape() == f_vis.shape() && f_seg.rank() == 4 &&
                 f_seg.dim(0) == f_ir.dim(0) && f_seg.dim(2) == f_ir.dim(2) &&
                 f_seg.dim(3) == f_ir.dim(3),
             ErrorKind::kShapeMismatch,
             "HIA inputs: ir " + ShapeString(f_ir.shape()) + ", vis " +
                 ShapeString(f_vis.shape()) + ", seg " + ShapeString(f_seg.shape()));
  Tensor seg_s = Embed(f_seg, seg_semantic_);
  Tensor ir_m = Embed(f_ir, ir_modality_);
  Tensor vis_m = Embed(f_vis, vis_modality_);
  if (config_.embed_unused_tokens) {
    // Defined by the embedding but not read by SoAM / MoAM.
    (void)Embed(f_seg, seg_modality_);
    (void)Embed(f_ir, ir_semantic_);
    (void)Embed(f_vis, vis_semantic_);
  }
  AttentionPair s = Soam(seg_s, ir_m, vis_m, proj_, config_);
  AttentionPair m = Moam(seg_s, ir_m, vis_m, proj_, config_);

  if (diag) {
    auto norms = [this](const Tensor& t) {
      const int heads = config_.heads, c = t.dim(1), d = c / heads;
      const int64_t plane = static_cast<int64_t>(t.dim(2)) * t.dim(3);
      std::vector<float> out(heads, 0.0f);
      for (int b = 0; b < t.dim(0); ++b) {
        for (int j = 0; j < c; ++j) {
          const float* p = t.data() + (static_cast<int64_t>(b) * c + j) * plane;
          double sq = 0.0;
          for (int64_t i = 0; i < plane; ++i) sq += static_cast<double>(p[i]) * p[i];
          out[j / d] += static_cast<float>(sq);
        }
      }
      for (float& v : out) v = std::sqrt(v);
      return out;
    };
    diag->soam_ir = norms(s.ir);
    diag->soam_vis = norms(s.vis);
    diag->moam_ir = norms(m.ir);
    diag->moam_vis = norms(m.vis);
  }

  Tensor ir_out = ops::Add(f_ir, MlpForward(mlp_ir_, s.ir, m.ir));
  Tensor vis_out = ops::Add(f_vis, MlpForward(mlp_vis_, s.vis, m.vis));
  return {ir_out, vis_out};
}

void HiaBlock::Register(nn::ParamSet& params, const std::string& prefix) const {
  seg_semantic_.Register(params, prefix + ".embed.seg_semantic");
  ir_modality_.Register(params, prefix + ".embed.ir_modality");
  vis_modality_.Register(params, prefix + ".embed.vis_modality");
  if (config_.embed_unused_tokens) {
    seg_modality_.Register(params, prefix + ".embed.seg_modality");
    ir_semantic_.Register(params, prefix + ".embed.ir_semantic");
    vis_semantic_.Register(params, prefix + ".embed.vis_semantic");
  }
  proj_.q_seg.Register(params, prefix + ".q_seg");
  proj_.k_seg.Register(params, prefix + ".k_seg");
  proj_.v_seg.Register(params, prefix + ".v_seg");
  proj_.q_ir.Register(params, prefix + ".q_ir");
  proj_.k_ir.Register(params, prefix + ".k_ir");
  proj_.v_ir.Register(params, prefix + ".v_ir");
  proj_.q_vis.Register(params, prefix + ".q_vis");
  proj_.k_vis.Register(params, prefix + ".k_vis");
  proj_.v_vis.Register(params, prefix + ".v_vis");
  mlp_ir_.fc1.Register(params, prefix + ".mlp_ir.fc1");
  mlp_ir_.fc2.Register(params, prefix + ".mlp_ir.fc2");
  mlp_vis_.fc1.Register(params, prefix + ".mlp_vis.fc1");
  mlp_vis_.fc2.Register(params, prefix + ".mlp_vis.fc2");
}

}  // namespace fseg
