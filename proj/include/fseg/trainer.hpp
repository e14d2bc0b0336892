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

// Alternating training: each round runs a segmentation phase with the
// fusion network frozen, then a fusion phase with the segmentation network
// frozen and the two task losses mixed by the weighting strategy.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fseg/data.hpp"
#include "fseg/fusion_net.hpp"
#include "fseg/losses.hpp"
#include "fseg/optim.hpp"
#include "fseg/seg_net.hpp"
#include "fseg/weighting.hpp"

namespace fseg {

struct RoundPlan {
  int rounds = 2;
  int seg_iters = 400;
  int fusion_iters = 200;
  int batch_size = 8;
  // 0: one pass over the dataset.
  int epoch_iters = 0;
  double seg_lr = 8e-5;
  double seg_lr_end = 0.0;
  int warmup_iters = 120;
  double warmup_lr = 1e-6;
  double fusion_lr = 1e-4;
  double fusion_lr_end = 1e-8;
  double power = 0.9;
  double clip_norm = 5.0;
};

void ValidateRoundPlan(const RoundPlan& plan);

struct TrainOptions {
  RoundPlan plan;
  WeightingConfig weighting;
  double eta = 0.5;
  PixelLossForm pixel_form = PixelLossForm::kLiteral;
  bool augment = false;
  AugmentConfig augment_config;
  int ignore_index = 255;
};

class JointModel {
 public:
  JointModel(const SegNetConfig& seg_config, const FusionConfig& fusion_config,
             uint64_t seed);

  SegNet seg;
  FusionNet fusion;

  nn::ParamSet SegParams() const { return seg.Params("seg"); }
  nn::ParamSet FusionParams() const { return fusion.Params("fusion"); }
  nn::ParamSet AllParams() const;
};

// Stacked tensors for one batch: gray visible and infrared [B,1,H,W], flat
// labels [B*H*W].
struct Batch {
  Tensor visible;
  Tensor infrared;
  std::vector<int> labels;
  std::vector<int> indices;
};

Tensor StackGray(const std::vector<const Image*>& images);
Batch MakeBatch(const std::vector<Sample>& samples, const std::vector<int>& indices);
// Unstack [N,1,H,W] into gray images.
std::vector<Image> UnstackGray(const Tensor& t);

struct LogRow {
  long iteration = 0;
  std::string phase;  // "seg" | "fusion"
  // NaN for terms not computed in the phase.
  double l_ssim = 0.0, l_mse = 0.0, l_grad = 0.0, l_seg = 0.0;
  double lambda1 = 0.0, lambda2 = 0.0;
  double lr = 0.0;
};

std::string LogHeader();
std::string FormatLogRow(const LogRow& row);

// One entry per epoch boundary of a fusion phase.
struct WeightRecord {
  int round = 0;
  long iteration = 0;
  double mean_fusion = 0.0, mean_seg = 0.0;
  double rate_fusion = 0.0, rate_seg = 0.0;
  double lambda1 = 0.0, lambda2 = 0.0;
};

std::string WeightHeader();
std::string FormatWeightRecord(const WeightRecord& r);

struct PhaseAudit {
  int round = 0;
  std::string phase;
  uint64_t frozen_before = 0, frozen_after = 0;
  uint64_t trained_before = 0, trained_after = 0;
};

struct ClipEvent {
  long iteration = 0;
  std::string phase;
  double norm = 0.0;
};

struct TrainState {
  int rounds_done = 0;
  long iteration = 0;
  RateHistory history{2};
  std::vector<double> lambdas;
  Rng rng;
  std::vector<WeightRecord> weights;
};

class Trainer {
 public:
  Trainer(TrainOptions options, JointModel& model, std::vector<Sample> samples,
          TrainState state);

  // Runs round state().rounds_done + 1.
  void RunRound();
  bool done() const { return state_.rounds_done >= options_.plan.rounds; }

  TrainState& state() { return state_; }
  Adam& seg_optimizer() { return seg_opt_; }
  Adam& fusion_optimizer() { return fusion_opt_; }
  const std::vector<PhaseAudit>& audits() const { return audits_; }

  std::function<void(const LogRow&)> on_log;
  std::function<void(const ClipEvent&)> on_clip;

 private:
  void SegPhase(int round);
  void FusionPhase(int round);
  // Shuffled epoch order drawn from the state RNG.
  std::vector<int> EpochOrder();
  std::vector<std::vector<int>> EpochBatches();
  Batch NextBatch(const std::vector<int>& indices);
  double SegLr(long step) const;
  double FusionLr(long step) const;
  int EpochIters() const;

  TrainOptions options_;
  JointModel& model_;
  std::vector<Sample> samples_;
  TrainState state_;
  std::unique_ptr<WeightingStrategy> strategy_;
  nn::ParamSet seg_params_, fusion_params_;
  Adam seg_opt_, fusion_opt_;
  std::vector<PhaseAudit> audits_;
  std::map<int, Image> fused_cache_;
};

}  // namespace fseg
