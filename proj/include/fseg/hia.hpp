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

// Hierarchical interactive attention. Modality features (infrared, visible)
// and a semantic tap are embedded into tokens; semantic-oriented attention
// (SoAM) queries the modality contexts with semantic tokens, and
// modality-oriented attention (MoAM) queries the semantic context with the
// modality tokens. Contexts are linear-cost products G = K^T V / mn per
// head, with no softmax by default. The concatenated results pass through
// one two-layer MLP per modality and are added back onto that modality.
//
// Tokens are kept channel-major, [B, C, H, W] with the H*W positions as the
// token axis, so the token matrix of the usual [N, C] formulation is the
// transpose of each batch slice.

#include <vector>

#include "fseg/nn.hpp"

namespace fseg {

struct HiaConfig {
  int channels = 32;  // token width C
  int heads = 4;
  // Softmax over the token axis of K before forming the context; the 1/mn
  // scale is dropped in that mode.
  bool key_softmax = false;
  // Also embed the semantic-kind modality tokens and modality-kind semantic
  // tokens. They are not consumed by the attention.
  bool embed_unused_tokens = false;
  // GELU between the MLP layers; disabled only in linearity tests.
  bool mlp_activation = true;
};

void ValidateHiaConfig(const HiaConfig& config);

// Token embedding: a per-position linear map, [B, C_in, H, W] -> [B, C, H, W].
Tensor Embed(const Tensor& feature, const nn::Linear& embedding);

// Semantic and modality embeddings of one feature map.
struct TokenPair {
  Tensor semantic;
  Tensor modality;
};
TokenPair EmbedTokens(const Tensor& feature, const nn::Linear& semantic,
                      const nn::Linear& modality);

// [B, C, C] with ones inside the per-head diagonal blocks.
Tensor HeadMask(int batch, int channels, int heads);

// Per-head contexts K_h^T V_h / N assembled block-diagonally into
// [B, C, C]; N = H*W. With key_softmax, K is softmax-normalized over the
// token axis per channel and the 1/N scale is dropped.
Tensor GlobalContext(const Tensor& k, const Tensor& v, int heads, bool key_softmax);
// Q_h G_h for every head at once: [B, C, H, W].
Tensor ApplyContext(const Tensor& q, const Tensor& context);

struct HiaProjections {
  nn::Linear q_seg, k_seg, v_seg;
  nn::Linear q_ir, k_ir, v_ir;
  nn::Linear q_vis, k_vis, v_vis;
};

struct AttentionPair {
  Tensor ir;
  Tensor vis;
};

// S_ir = Q_s G_ir, S_vis = Q_s G_vis.
AttentionPair Soam(const Tensor& seg_semantic, const Tensor& ir_modality,
                   const Tensor& vis_modality, const HiaProjections& proj,
                   const HiaConfig& config);
// M_ir = Q_ir G_s, M_vis = Q_vis G_s.
AttentionPair Moam(const Tensor& seg_semantic, const Tensor& ir_modality,
                   const Tensor& vis_modality, const HiaProjections& proj,
                   const HiaConfig& config);

// Per-head Frobenius norms of the attention outputs, for inspection dumps.
struct HiaDiagnostics {
  std::vector<float> soam_ir, soam_vis, moam_ir, moam_vis;
};

class HiaBlock {
 public:
  HiaBlock() = default;
  // modality_channels: C_in of the infrared / visible features;
  // semantic_channels: channels of the semantic tap.
  HiaBlock(int modality_channels, int semantic_channels, const HiaConfig& config, Rng& rng);

  // Returns refined (F_ir', F_vis'); fills `diag` when given.
  std::pair<Tensor, Tensor> Forward(const Tensor& f_ir, const Tensor& f_vis,
                                    const Tensor& f_seg, HiaDiagnostics* diag = nullptr) const;

  void Register(nn::ParamSet& params, const std::string& prefix) const;
  const HiaConfig& config() const { return config_; }

  struct Mlp {
    nn::Linear fc1, fc2;
  };

  // Exposed for tests.
  HiaProjections& projections() { return proj_; }
  Mlp& mlp_ir() { return mlp_ir_; }
  Mlp& mlp_vis() { return mlp_vis_; }
  nn::Linear& embed_seg_semantic() { return seg_semantic_; }
  nn::Linear& embed_ir_modality() { return ir_modality_; }
  nn::Linear& embed_vis_modality() { return vis_modality_; }

 private:
  Tensor MlpForward(const Mlp& mlp, const Tensor& s, const Tensor& m) const;

  HiaConfig config_;
  nn::Linear seg_semantic_, ir_modality_, vis_modality_;
  // Only with embed_unused_tokens.
  nn::Linear seg_modality_, ir_semantic_, vis_semantic_;
  HiaProjections proj_;
  Mlp mlp_ir_, mlp_vis_;
};

}  // namespace fseg
