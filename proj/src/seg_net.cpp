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
#include "fseg/seg_net.hpp"

#include <cmath>

#include "fseg/errors.hpp"

namespace fseg {

using nn::FromTokens;
using nn::Init;
using nn::ToTokens;

void ValidateSegNetConfig(const SegNetConfig& c) {
  FSEG_CHECK(c.num_classes >= 2, ErrorKind::kConfig, "seg: num_classes must be >= 2");
  FSEG_CHECK(c.decoder_width > 0 && c.mlp_ratio > 0 && c.in_channels > 0,
             ErrorKind::kConfig, "seg: widths must be positive");
  for (int s = 0; s < 4; ++s) {
    FSEG_CHECK(c.widths[s] > 0 && c.depths[s] >= 0 && c.heads[s] > 0 && c.sr_ratios[s] > 0,
               ErrorKind::kConfig, "seg: stage settings must be positive");
    FSEG_CHECK(c.widths[s] % c.heads[s] == 0, ErrorKind::kConfig,
               "seg: stage " + std::to_string(s + 1) +
                   " width is not divisible by its head count");
  }
}

SegNet::SegNet(const SegNetConfig& config, Rng& rng) : config_(config) {
  ValidateSegNetConfig(config);
  int in = config.in_channels;
  for (int s = 0; s < 4; ++s) {
    const int c = config.widths[s];
    Stage stage;
    const int k = s == 0 ? 7 : 3;
    stage.embed = nn::Conv2d(in, c, k, {.stride = s == 0 ? 4 : 2, .padding = k / 2},
                             Init::kHeNormal, rng);
    stage.embed_norm = nn::LayerNorm(c);
    for (int b = 0; b < config.depths[s]; ++b) {
      Block block;
      block.norm1 = nn::LayerNorm(c);
      block.norm2 = nn::LayerNorm(c);
      block.attn.heads = config.heads[s];
      block.attn.sr_ratio = config.sr_ratios[s];
      block.attn.q = nn::Linear(c, c, Init::kTruncNormal, rng);
      block.attn.kv = nn::Linear(c, 2 * c, Init::kTruncNormal, rng);
      block.attn.proj = nn::Linear(c, c, Init::kTruncNormal, rng);
      if (block.attn.sr_ratio > 1) {
        const int r = block.attn.sr_ratio;
        block.attn.sr = nn::Conv2d(c, c, r, {.stride = r}, Init::kHeNormal, rng);
        block.attn.sr_norm = nn::LayerNorm(c);
      }
      const int hidden = c * config.mlp_ratio;
      block.ffn.fc1 = nn::Linear(c, hidden, Init::kTruncNormal, rng);
      block.ffn.dwconv = nn::Conv2d(hidden, hidden, 3, {.padding = 1, .groups = hidden},
                                    Init::kHeNormal, rng);
      block.ffn.fc2 = nn::Linear(hidden, c, Init::kTruncNormal, rng);
      stage.blocks.push_back(std::move(block));
    }
    stage.norm = nn::LayerNorm(c);
    stages_.push_back(std::move(stage));
    in = c;
  }
  const int d = config.decoder_width;
  for (int s = 0; s < 4; ++s) {
    decoder_proj_[s] = nn::Conv2d(config.widths[s], d, 1, {}, Init::kXavier, rng);
  }
  decoder_fuse_ = nn::Conv2d(4 * d, d, 1, {}, Init::kHeNormal, rng);
  classifier_ = nn::Conv2d(d, config.num_classes, 1, {}, Init::kXavier, rng);
}

Tensor SegNet::AttentionForward(const Attention& a, const Tensor& x, int h, int w) const {
  const int n = x.dim(0), tokens = x.dim(1), c = x.dim(2);
  const int heads = a.heads, d = c / heads;
  Tensor src = x;
  int kv_tokens = tokens;
  if (a.sr_ratio > 1) {
    Tensor reduced = a.sr(FromTokens(x, h, w));
    kv_tokens = reduced.dim(2) * reduced.dim(3);
    src = a.sr_norm(ToTokens(reduced));
  }
  auto split_heads = [&](const Tensor& t, int len) {
    return ops::Reshape(ops::Permute(ops::Reshape(t, {n, len, heads, d}), {0, 2, 1, 3}),
                        {n * heads, len, d});
  };
  Tensor q = split_heads(a.q(x), tokens);
  Tensor kv = a.kv(src);
  Tensor k = split_heads(ops::Narrow(kv, 2, 0, c), kv_tokens);
  Tensor v = split_heads(ops::Narrow(kv, 2, c, c), kv_tokens);
  Tensor attn = ops::Softmax(ops::Scale(ops::MatMul(q, k, false, true),
                                        1.0f / std::sqrt(static_cast<float>(d))));
  Tensor out = ops::MatMul(attn, v);
  out = ops::Reshape(ops::Permute(ops::Reshape(out, {n, heads, tokens, d}), {0, 2, 1, 3}),
                     {n, tokens, c});
  return a.proj(out);
}

Tensor SegNet::FfnForward(const MixFfn& f, const Tensor& x, int h, int w) const {
  Tensor hidden = f.fc1(x);
  hidden = ToTokens(f.dwconv(FromTokens(hidden, h, w)));
  return f.fc2(ops::Gelu(hidden));
}

Pyramid SegNet::Encode(const Tensor& image) const {
  FSEG_CHECK(image.rank() == 4 && image.dim(1) == config_.in_channels,
             ErrorKind::kShapeMismatch,
             "seg encoder expects [N," + std::to_string(config_.in_channels) +
                 ",H,W], got " + ShapeString(image.shape()));
  Pyramid pyr;
  pyr.height = image.dim(2);
  pyr.width = image.dim(3);
  pyr.padded_height = (pyr.height + 31) / 32 * 32;
  pyr.padded_width = (pyr.width + 31) / 32 * 32;
  Tensor x = image;
  if (pyr.padded_height != pyr.height || pyr.padded_width != pyr.width) {
    x = ops::Pad2d(image, 0, pyr.padded_height - pyr.height, 0,
                   pyr.padded_width - pyr.width, ops::PadMode::kReflect);
  }
  for (const Stage& stage : stages_) {
    Tensor fmap = stage.embed(x);
    const int h = fmap.dim(2), w = fmap.dim(3);
    Tensor t = stage.embed_norm(ToTokens(fmap));
    for (const Block& b : stage.blocks) {
      t = ops::Add(t, AttentionForward(b.attn, b.norm1(t), h, w));
      t = ops::Add(t, FfnForward(b.ffn, b.norm2(t), h, w));
    }
    x = FromTokens(stage.norm(t), h, w);
    pyr.stages.push_back(x);
  }
  return pyr;
}

Tensor SegNet::Decode(const Pyramid& pyr) const {
  FSEG_CHECK(pyr.stages.size() == 4, ErrorKind::kShapeMismatch,
             "decoder needs a four-stage pyramid");
  const int gh = pyr.padded_height / 4, gw = pyr.padded_width / 4;
  std::vector<Tensor> parts;
  for (int s = 0; s < 4; ++s) {
    FSEG_CHECK(pyr.stages[s].dim(1) == config_.widths[s], ErrorKind::kShapeMismatch,
               "pyramid stage width does not match the decoder");
    Tensor p = decoder_proj_[s](pyr.stages[s]);
    if (p.dim(2) != gh || p.dim(3) != gw) p = ops::ResizeBilinear(p, gh, gw);
    parts.push_back(p);
  }
  Tensor fused = ops::Relu(decoder_fuse_(ops::Concat(parts, 1)));
  Tensor logits = ops::ResizeBilinear(classifier_(fused), pyr.padded_height, pyr.padded_width);
  if (pyr.padded_height != pyr.height || pyr.padded_width != pyr.width) {
    logits = ops::Crop2d(logits, 0, 0, pyr.height, pyr.width);
  }
  return logits;
}

void SegNet::Register(nn::ParamSet& params, const std::string& prefix) const {
  for (size_t s = 0; s < stages_.size(); ++s) {
    const Stage& st = stages_[s];
    const std::string sp = prefix + ".stage" + std::to_string(s + 1);
    st.embed.Register(params, sp + ".embed");
    st.embed_norm.Register(params, sp + ".embed_norm");
    for (size_t b = 0; b < st.blocks.size(); ++b) {
      const Block& blk = st.blocks[b];
      const std::string bp = sp + ".block" + std::to_string(b);
      blk.norm1.Register(params, bp + ".norm1");
      blk.attn.q.Register(params, bp + ".attn.q");
      blk.attn.kv.Register(params, bp + ".attn.kv");
      blk.attn.proj.Register(params, bp + ".attn.proj");
      if (blk.attn.sr_ratio > 1) {
        blk.attn.sr.Register(params, bp + ".attn.sr");
        blk.attn.sr_norm.Register(params, bp + ".attn.sr_norm");
      }
      blk.norm2.Register(params, bp + ".norm2");
      blk.ffn.fc1.Register(params, bp + ".ffn.fc1");
      blk.ffn.dwconv.Register(params, bp + ".ffn.dwconv");
      blk.ffn.fc2.Register(params, bp + ".ffn.fc2");
    }
    st.norm.Register(params, sp + ".norm");
  }
  for (int s = 0; s < 4; ++s) {
    decoder_proj_[s].Register(params, prefix + ".decoder.proj" + std::to_string(s + 1));
  }
  decoder_fuse_.Register(params, prefix + ".decoder.fuse");
  classifier_.Register(params, prefix + ".decoder.classifier");
}

nn::ParamSet SegNet::Params(const std::string& prefix) const {
  nn::ParamSet params;
  Register(params, prefix);
  return params;
}

TapProjections MakeTapProjections(const SegNetConfig& seg, int tap_channels, Rng& rng) {
  FSEG_CHECK(tap_channels > 0, ErrorKind::kConfig, "tap_channels must be positive");
  TapProjections p;
  p.stage1 = nn::Conv2d(seg.widths[0], tap_channels, 1, {}, Init::kXavier, rng);
  p.stage2 = nn::Conv2d(seg.widths[1], tap_channels, 1, {}, Init::kXavier, rng);
  return p;
}

std::pair<Tensor, Tensor> SemanticTaps(const Pyramid& pyr, int target_h, int target_w,
                                       const TapProjections& proj) {
  FSEG_CHECK(pyr.stages.size() >= 2, ErrorKind::kShapeMismatch,
             "semantic taps need stages 1 and 2");
  auto tap = [&](const Tensor& stage, const nn::Conv2d& conv) {
    Tensor t = conv(stage);
    // Back onto the padded input grid, drop the padding, then resample.
    t = ops::ResizeBilinear(t, pyr.padded_height, pyr.padded_width);
    if (pyr.padded_height != pyr.height || pyr.padded_width != pyr.width) {
      t = ops::Crop2d(t, 0, 0, pyr.height, pyr.width);
    }
    if (t.dim(2) != target_h || t.dim(3) != target_w) {
      t = ops::ResizeBilinear(t, target_h, target_w);
    }
    return t;
  };
  return {tap(pyr.stages[0], proj.stage1), tap(pyr.stages[1], proj.stage2)};
}

Tensor ReplicateToRgb(const Tensor& gray) {
  FSEG_CHECK(gray.rank() == 4 && gray.dim(1) == 1, ErrorKind::kShapeMismatch,
             "expected [N,1,H,W], got " + ShapeString(gray.shape()));
  return ops::Concat({gray, gray, gray}, 1);
}

}  // namespace fseg
