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
#include "fseg/fusion_net.hpp"

#include "fseg/errors.hpp"

namespace fseg {

using nn::Init;

namespace {
constexpr float kSlope = 0.2f;
}  // namespace

void ValidateFusionConfig(const FusionConfig& c) {
  FSEG_CHECK(c.base_channels > 0 && c.growth > 0 && c.dense_layers > 0 &&
                 c.dilation > 0 && c.decoder_width > 0 && c.tap_channels > 0,
             ErrorKind::kConfig, "fusion: sizes must be positive");
  ValidateHiaConfig(c.hia);
}

Drdb::Drdb(const FusionConfig& c, Rng& rng) {
  stem = nn::Conv2d(1, c.base_channels, 3, {.padding = 1}, Init::kHeNormal, rng);
  int in = c.base_channels;
  for (int l = 0; l < c.dense_layers; ++l) {
    dense.emplace_back(in, c.growth, 3,
                       ops::ConvOptions{.padding = c.dilation, .dilation = c.dilation},
                       Init::kHeNormal, rng);
    in += c.growth;
  }
  fuse = nn::Conv2d(in, c.base_channels, 1, {}, Init::kHeNormal, rng);
}

Tensor Drdb::Forward(const Tensor& gray) const {
  FSEG_CHECK(gray.rank() == 4 && gray.dim(1) == 1, ErrorKind::kShapeMismatch,
             "DRDB expects single-channel [N,1,H,W], got " + ShapeString(gray.shape()));
  Tensor base = ops::LeakyRelu(stem(gray), kSlope);
  std::vector<Tensor> feats{base};
  Tensor cat = base;
  for (const auto& conv : dense) {
    feats.push_back(ops::LeakyRelu(conv(cat), kSlope));
    cat = ops::Concat(feats, 1);
  }
  return ops::Add(base, fuse(cat));
}

void Drdb::Register(nn::ParamSet& params, const std::string& prefix) const {
  stem.Register(params, prefix + ".stem");
  for (size_t l = 0; l < dense.size(); ++l) {
    dense[l].Register(params, prefix + ".dense" + std::to_string(l));
  }
  fuse.Register(params, prefix + ".fuse");
}

FusionNet::FusionNet(const FusionConfig& config, const SegNetConfig& seg, Rng& rng)
    : config_(config) {
  ValidateFusionConfig(config);
  drdb_vis_ = Drdb(config, rng);
  drdb_ir_ = Drdb(config, rng);
  dec1_ = nn::Conv2d(2 * config.base_channels, config.decoder_width, 3, {.padding = 1},
                     Init::kHeNormal, rng);
  dec2_ = nn::Conv2d(config.decoder_width, 1, 3, {.padding = 1}, Init::kXavier, rng);
  taps_ = MakeTapProjections(seg, config.tap_channels, rng);
  hia1_ = HiaBlock(config.base_channels, config.tap_channels, config.hia, rng);
  hia2_ = HiaBlock(config.base_channels, config.tap_channels, config.hia, rng);
}

Tensor FusionNet::Decode(const Tensor& f_ir, const Tensor& f_vis) const {
  FSEG_CHECK(f_ir.rank() == 4 && f_ir.shape() == f_vis.shape() &&
                 f_ir.dim(1) == config_.base_channels,
             ErrorKind::kShapeMismatch,
             "fusion decoder inputs: " + ShapeString(f_ir.shape()) + " vs " +
                 ShapeString(f_vis.shape()));
  Tensor h = ops::LeakyRelu(dec1_(ops::Concat({f_ir, f_vis}, 1)), kSlope);
  return ops::Sigmoid(dec2_(h));
}

FusionResult FusionNet::Forward(const Tensor& x, const Tensor& y, const SegNet& seg,
                                bool with_diagnostics) const {
  FSEG_CHECK(x.rank() == 4 && x.shape() == y.shape() && x.dim(1) == 1,
             ErrorKind::kShapeMismatch,
             "fusion inputs must be aligned gray [N,1,H,W]: " + ShapeString(x.shape()) +
                 " vs " + ShapeString(y.shape()));
  FusionResult r;
  Tensor f_vis = drdb_vis_.Forward(x);
  Tensor f_ir = drdb_ir_.Forward(y);
  r.fused_pre = Decode(f_ir, f_vis);
  if (!config_.use_hia) {
    r.fused = r.fused_pre;
    return r;
  }
  const int h = x.dim(2), w = x.dim(3);
  Pyramid pyr = seg.Encode(ReplicateToRgb(r.fused_pre));
  std::tie(r.tap1, r.tap2) = SemanticTaps(pyr, h, w, taps_);
  HiaDiagnostics* d1 = with_diagnostics ? &r.hia1 : nullptr;
  HiaDiagnostics* d2 = with_diagnostics ? &r.hia2 : nullptr;
  if (config_.hia_mode == HiaMode::kSequential) {
    std::tie(f_ir, f_vis) = hia1_.Forward(f_ir, f_vis, r.tap1, d1);
    std::tie(f_ir, f_vis) = hia2_.Forward(f_ir, f_vis, r.tap2, d2);
  } else {
    auto [ir1, vis1] = hia1_.Forward(f_ir, f_vis, r.tap1, d1);
    auto [ir2, vis2] = hia2_.Forward(f_ir, f_vis, r.tap2, d2);
    // F + (F1 - F) + (F2 - F) = F1 + F2 - F.
    f_ir = ops::Sub(ops::Add(ir1, ir2), f_ir);
    f_vis = ops::Sub(ops::Add(vis1, vis2), f_vis);
  }
  r.fused = Decode(f_ir, f_vis);
  return r;
}

void FusionNet::Register(nn::ParamSet& params, const std::string& prefix) const {
  drdb_vis_.Register(params, prefix + ".drdb_vis");
  drdb_ir_.Register(params, prefix + ".drdb_ir");
  dec1_.Register(params, prefix + ".decoder.conv1");
  dec2_.Register(params, prefix + ".decoder.conv2");
  taps_.stage1.Register(params, prefix + ".tap1");
  taps_.stage2.Register(params, prefix + ".tap2");
  hia1_.Register(params, prefix + ".hia1");
  hia2_.Register(params, prefix + ".hia2");
}

nn::ParamSet FusionNet::Params(const std::string& prefix) const {
  nn::ParamSet params;
  Register(params, prefix);
  return params;
}

}  // namespace fseg
