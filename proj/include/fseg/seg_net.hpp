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

// Hierarchical transformer segmentation network: four overlapping
// patch-embedding stages with spatial-reduction attention and Mix-FFN, an
// all-MLP decoder, and the stride-4 / stride-8 semantic taps handed to the
// fusion network.

#include <array>
#include <vector>

#include "fseg/nn.hpp"

namespace fseg {

struct SegNetConfig {
  std::array<int, 4> widths{16, 32, 64, 128};
  std::array<int, 4> depths{2, 2, 2, 2};
  std::array<int, 4> heads{1, 2, 4, 8};
  std::array<int, 4> sr_ratios{8, 4, 2, 1};
  int mlp_ratio = 4;
  int decoder_width = 64;
  int num_classes = 4;
  int in_channels = 3;
};

void ValidateSegNetConfig(const SegNetConfig& config);

// Encoder output. Stage maps are NCHW with strides 4, 8, 16, 32 relative to
// the reflect-padded input; `height`/`width` record the unpadded size.
struct Pyramid {
  std::vector<Tensor> stages;
  int height = 0;
  int width = 0;
  int padded_height = 0;
  int padded_width = 0;
};

class SegNet {
 public:
  SegNet() = default;
  SegNet(const SegNetConfig& config, Rng& rng);

  // image: [N, in_channels, H, W].
  Pyramid Encode(const Tensor& image) const;
  // Logits [N, num_classes, H, W] at the unpadded input size.
  Tensor Decode(const Pyramid& pyramid) const;
  Tensor Forward(const Tensor& image) const { return Decode(Encode(image)); }

  const SegNetConfig& config() const { return config_; }
  void Register(nn::ParamSet& params, const std::string& prefix) const;
  nn::ParamSet Params(const std::string& prefix = "seg") const;

  // Exposed for tests that perturb or permute individual layers.
  nn::Conv2d& classifier() { return classifier_; }
  nn::Conv2d& patch_embed_conv(int stage) { return stages_[stage].embed; }

 private:
  struct Attention {
    nn::Linear q, kv, proj;
    nn::Conv2d sr;
    nn::LayerNorm sr_norm;
    int heads = 1;
    int sr_ratio = 1;
  };
  struct MixFfn {
    nn::Linear fc1, fc2;
    nn::Conv2d dwconv;
  };
  struct Block {
    nn::LayerNorm norm1, norm2;
    Attention attn;
    MixFfn ffn;
  };
  struct Stage {
    nn::Conv2d embed;
    nn::LayerNorm embed_norm;
    std::vector<Block> blocks;
    nn::LayerNorm norm;
  };

  Tensor AttentionForward(const Attention& a, const Tensor& tokens, int h, int w) const;
  Tensor FfnForward(const MixFfn& f, const Tensor& tokens, int h, int w) const;

  SegNetConfig config_;
  std::vector<Stage> stages_;
  std::array<nn::Conv2d, 4> decoder_proj_;
  nn::Conv2d decoder_fuse_;
  nn::Conv2d classifier_;
};

// 1x1 projections of stages 1 and 2 to `tap_channels`, owned by the fusion
// side because only the fusion objective trains them.
struct TapProjections {
  nn::Conv2d stage1;
  nn::Conv2d stage2;
};

TapProjections MakeTapProjections(const SegNetConfig& seg, int tap_channels, Rng& rng);

// Stage-1 and stage-2 maps projected and bilinearly resampled to
// target_h x target_w.
std::pair<Tensor, Tensor> SemanticTaps(const Pyramid& pyramid, int target_h,
                                       int target_w, const TapProjections& proj);

// Gray [N,1,H,W] -> [N,3,H,W] by channel replication.
Tensor ReplicateToRgb(const Tensor& gray);

}  // namespace fseg
