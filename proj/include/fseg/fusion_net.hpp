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

#include <vector>

#include "fseg/hia.hpp"
#include "fseg/nn.hpp"
#include "fseg/seg_net.hpp"

namespace fseg {

enum class HiaMode {
  kSequential,  // stage-1 tap block, then stage-2 tap block
  kParallel,    // both blocks read the same features; residuals are summed
};

struct FusionConfig {
  int base_channels = 32;  // C_f
  int growth = 16;
  int dense_layers = 3;
  int dilation = 2;
  int decoder_width = 32;
  int tap_channels = 32;
  bool use_hia = true;
  HiaMode hia_mode = HiaMode::kSequential;
  HiaConfig hia;
};

void ValidateFusionConfig(const FusionConfig& config);

// Stem conv, L densely connected dilated 3x3 convs, 1x1 fusion conv and a
// residual add onto the stem output.
class Drdb {
 public:
  Drdb() = default;
  Drdb(const FusionConfig& config, Rng& rng);

  // gray: [N,1,H,W] -> [N,C_f,H,W].
  Tensor Forward(const Tensor& gray) const;
  void Register(nn::ParamSet& params, const std::string& prefix) const;

  nn::Conv2d stem;
  std::vector<nn::Conv2d> dense;
  nn::Conv2d fuse;
};

struct FusionResult {
  Tensor fused;      // u, [N,1,H,W] in (0,1)
  Tensor fused_pre;  // u_pre from the HIA-free pass
  Tensor tap1, tap2;
  HiaDiagnostics hia1, hia2;
};

class FusionNet {
 public:
  FusionNet() = default;
  FusionNet(const FusionConfig& config, const SegNetConfig& seg, Rng& rng);

  Tensor ExtractVisible(const Tensor& gray) const { return drdb_vis_.Forward(gray); }
  Tensor ExtractInfrared(const Tensor& gray) const { return drdb_ir_.Forward(gray); }
  // Concatenate, two 3x3 convs, sigmoid.
  Tensor Decode(const Tensor& f_ir, const Tensor& f_vis) const;

  // Two passes: u_pre from unrefined features, semantic taps from the seg
  // encoder run on u_pre, HIA refinement, final decode.
  FusionResult Forward(const Tensor& visible_gray, const Tensor& infrared_gray,
                       const SegNet& seg, bool with_diagnostics = false) const;

  void Register(nn::ParamSet& params, const std::string& prefix) const;
  nn::ParamSet Params(const std::string& prefix = "fusion") const;
  const FusionConfig& config() const { return config_; }

  // Exposed for tests.
  Drdb& drdb_ir() { return drdb_ir_; }
  Drdb& drdb_vis() { return drdb_vis_; }
  HiaBlock& hia(int index) { return index == 0 ? hia1_ : hia2_; }
  FusionConfig& mutable_config() { return config_; }

 private:
  FusionConfig config_;
  Drdb drdb_vis_, drdb_ir_;
  nn::Conv2d dec1_, dec2_;
  TapProjections taps_;
  HiaBlock hia1_, hia2_;
};

}  // namespace fseg
