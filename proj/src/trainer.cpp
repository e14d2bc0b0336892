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
#include "fseg/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>

#include "fseg/errors.hpp"
#include "fseg/image.hpp"

namespace fseg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string Num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void CheckFinite(double v, const char* what, long iteration) {
  FSEG_CHECK(std::isfinite(v), ErrorKind::kNumerical,
             std::string("non-finite ") + what + " at iteration " + std::to_string(iteration));
}

}  // namespace

void ValidateRoundPlan(const RoundPlan& p) {
  FSEG_CHECK(p.rounds > 0, ErrorKind::kConfig, "plan.rounds must be positive");
  FSEG_CHECK(p.seg_iters >= 0 && p.fusion_iters >= 0, ErrorKind::kConfig,
             "plan iteration counts must be non-negative");
  FSEG_CHECK(p.seg_iters + p.fusion_iters > 0, ErrorKind::kConfig,
             "plan has no iterations");
  FSEG_CHECK(p.batch_size > 0, ErrorKind::kConfig, "plan.batch_size must be positive");
  FSEG_CHECK(p.epoch_iters >= 0, ErrorKind::kConfig, "plan.epoch_iters must be >= 0");
  FSEG_CHECK(p.warmup_iters >= 0, ErrorKind::kConfig, "plan.warmup_iters must be >= 0");
  FSEG_CHECK(p.seg_lr >= 0 && p.seg_lr_end >= 0 && p.warmup_lr >= 0 && p.fusion_lr >= 0 &&
                 p.fusion_lr_end >= 0,
             ErrorKind::kConfig, "learning rates must be non-negative");
  FSEG_CHECK(p.power > 0, ErrorKind::kConfig, "plan.power must be positive");
  FSEG_CHECK(p.clip_norm > 0, ErrorKind::kConfig, "plan.clip_norm must be positive");
}

JointModel::JointModel(const SegNetConfig& seg_config, const FusionConfig& fusion_config,
                       uint64_t seed) {
  Rng rng(seed);
  seg = SegNet(seg_config, rng);
  fusion = FusionNet(fusion_config, seg_config, rng);
}

nn::ParamSet JointModel::AllParams() const {
  nn::ParamSet all = SegParams();
  all.Append(FusionParams());
  return all;
}

Tensor StackGray(const std::vector<const Image*>& images) {
  FSEG_CHECK(!images.empty(), ErrorKind::kShapeMismatch, "empty batch");
  const int h = images[0]->height, w = images[0]->width;
  Buffer values;
  values.reserve(images.size() * h * w);
  for (const Image* img : images) {
    FSEG_CHECK(img->height == h && img->width == w && img->channels == 1,
               ErrorKind::kShapeMismatch, "batch images must share a gray H x W");
    values.insert(values.end(), img->pixels.begin(), img->pixels.end());
  }
  return Tensor({static_cast<int>(images.size()), 1, h, w}, std::move(values));
}

Batch MakeBatch(const std::vector<Sample>& samples, const std::vector<int>& indices) {
  std::vector<Image> vis, ir;
  Batch b;
  b.indices = indices;
  for (int i : indices) {
    const Sample& s = samples[i];
    vis.push_back(ToGray(s.pair.visible));
    ir.push_back(ToGray(s.pair.infrared));
    b.labels.insert(b.labels.end(), s.label.classes.begin(), s.label.classes.end());
  }
  std::vector<const Image*> pv, pi;
  for (size_t k = 0; k < vis.size(); ++k) {
    pv.push_back(&vis[k]);
    pi.push_back(&ir[k]);
  }
  b.visible = StackGray(pv);
  b.infrared = StackGray(pi);
  return b;
}

std::vector<Image> UnstackGray(const Tensor& t) {
  FSEG_CHECK(t.rank() == 4 && t.dim(1) == 1, ErrorKind::kShapeMismatch,
             "expected [N,1,H,W], got " + ShapeString(t.shape()));
  const int n = t.dim(0), h = t.dim(2), w = t.dim(3);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    Image img(h, w, 1, ColorSpace::kGray);
    std::copy(t.data() + static_cast<size_t>(i) * h * w,
              t.data() + static_cast<size_t>(i + 1) * h * w, img.pixels.begin());
    out.push_back(std::move(img));
  }
  return out;
}

std::string LogHeader() { return "iteration,phase,l_ssim,l_mse,l_grad,l_seg,lambda1,lambda2,lr"; }

std::string FormatLogRow(const LogRow& r) {
  return std::to_string(r.iteration) + "," + r.phase + "," + Num(r.l_ssim) + "," +
         Num(r.l_mse) + "," + Num(r.l_grad) + "," + Num(r.l_seg) + "," + Num(r.lambda1) +
         "," + Num(r.lambda2) + "," + Num(r.lr);
}

std::string WeightHeader() {
  return "round,iteration,mean_fusion,mean_seg,rate_fusion,rate_seg,lambda1,lambda2";
}

std::string FormatWeightRecord(const WeightRecord& r) {
  return std::to_string(r.round) + "," + std::to_string(r.iteration) + "," +
         Num(r.mean_fusion) + "," + Num(r.mean_seg) + "," + Num(r.rate_fusion) + "," +
         Num(r.rate_seg) + "," + Num(r.lambda1) + "," + Num(r.lambda2);
}

Trainer::Trainer(TrainOptions options, JointModel& model, std::vector<Sample> samples,
                 TrainState state)
    : options_(std::move(options)),
      model_(model),
      samples_(std::move(samples)),
      state_(std::move(state)) {
  ValidateRoundPlan(options_.plan);
  FSEG_CHECK(!samples_.empty(), ErrorKind::kIo, "training set is empty");
  if (!options_.augment) {
    for (const Sample& s : samples_) {
      FSEG_CHECK(s.label.height == samples_[0].label.height &&
                     s.label.width == samples_[0].label.width,
                 ErrorKind::kShapeMismatch,
                 "samples differ in size; enable augmentation to crop them");
    }
  }
  strategy_ = MakeWeightingStrategy(options_.weighting, 2);
  if (state_.lambdas.empty()) state_.lambdas = strategy_->Weights(state_.history);
  seg_params_ = model_.SegParams();
  fusion_params_ = model_.FusionParams();
  seg_opt_ = Adam(seg_params_);
  fusion_opt_ = Adam(fusion_params_);
}

int Trainer::EpochIters() const {
  if (options_.plan.epoch_iters > 0) return options_.plan.epoch_iters;
  const int n = static_cast<int>(samples_.size());
  return (n + options_.plan.batch_size - 1) / options_.plan.batch_size;
}

std::vector<int> Trainer::EpochOrder() {
  std::vector<int> order(samples_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  state_.rng.Shuffle(order);
  return order;
}

std::vector<std::vector<int>> Trainer::EpochBatches() {
  const std::vector<int> order = EpochOrder();
  std::vector<std::vector<int>> batches;
  for (size_t i = 0; i < order.size(); i += options_.plan.batch_size) {
    const size_t end = std::min(order.size(), i + options_.plan.batch_size);
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

Batch Trainer::NextBatch(const std::vector<int>& indices) {
  if (!options_.augment) return MakeBatch(samples_, indices);
  std::vector<Sample> aug;
  std::vector<int> local;
  for (int i : indices) {
    const Sample& s = samples_[i];
    aug.push_back(Augment(s.pair, s.label, options_.augment_config, state_.rng));
    local.push_back(static_cast<int>(local.size()));
  }
  Batch b = MakeBatch(aug, local);
  b.indices = indices;
  return b;
}

double Trainer::SegLr(long step) const {
  const RoundPlan& p = options_.plan;
  const long total = static_cast<long>(p.rounds) * p.seg_iters;
  if (step < p.warmup_iters || total <= p.warmup_iters) return p.warmup_lr;
  return PolyLr(step - p.warmup_iters, total - p.warmup_iters, p.seg_lr, p.seg_lr_end, p.power);
}

double Trainer::FusionLr(long step) const {
  const RoundPlan& p = options_.plan;
  const long total = static_cast<long>(p.rounds) * p.fusion_iters;
  return PolyLr(step, total, p.fusion_lr, p.fusion_lr_end, p.power);
}

void Trainer::RunRound() {
  FSEG_CHECK(!done(), ErrorKind::kConfig, "all planned rounds are complete");
  const int round = state_.rounds_done + 1;
  if (options_.plan.seg_iters > 0) SegPhase(round);
  if (options_.plan.fusion_iters > 0) FusionPhase(round);
  state_.rounds_done = round;
}

void Trainer::SegPhase(int round) {
  PhaseAudit audit{round, "seg", fusion_params_.Checksum(), 0, seg_params_.Checksum(), 0};
  fusion_params_.SetRequiresGrad(false);
  seg_params_.SetRequiresGrad(true);
  fused_cache_.clear();
  std::deque<std::vector<int>> queue;
  for (int it = 0; it < options_.plan.seg_iters; ++it) {
    if (queue.empty()) {
      for (auto& b : EpochBatches()) queue.push_back(std::move(b));
    }
    const std::vector<int> indices = queue.front();
    queue.pop_front();
    Batch batch = NextBatch(indices);

    Tensor u;
    {
      NoGradGuard no_grad;
      if (options_.augment) {
        u = model_.fusion.Forward(batch.visible, batch.infrared, model_.seg).fused;
      } else {
        std::vector<int> missing;
        for (size_t k = 0; k < indices.size(); ++k) {
          if (!fused_cache_.count(indices[k])) missing.push_back(indices[k]);
        }
        if (!missing.empty()) {
          Batch mb = MakeBatch(samples_, missing);
          std::vector<Image> fused = UnstackGray(
              model_.fusion.Forward(mb.visible, mb.infrared, model_.seg).fused);
          for (size_t k = 0; k < missing.size(); ++k) {
            fused_cache_[missing[k]] = std::move(fused[k]);
          }
        }
        std::vector<const Image*> ptrs;
        for (int i : indices) ptrs.push_back(&fused_cache_.at(i));
        u = StackGray(ptrs);
      }
    }

    seg_params_.ZeroGrad();
    Tensor logits = model_.seg.Forward(ReplicateToRgb(u));
    Tensor loss = LossSeg(logits, batch.labels, options_.ignore_index);
    const long iteration = ++state_.iteration;
    CheckFinite(loss.item(), "segmentation loss", iteration);
    loss.Backward();
    const double norm = ClipGradNorm(seg_params_, options_.plan.clip_norm);
    CheckFinite(norm, "segmentation gradient", iteration);
    if (norm > options_.plan.clip_norm && on_clip) on_clip({iteration, "seg", norm});
    const double lr = SegLr(seg_opt_.steps());
    seg_opt_.Step(lr);

    if (on_log) {
      on_log({iteration, "seg", kNaN, kNaN, kNaN, loss.item(), state_.lambdas[0],
              state_.lambdas[1], lr});
    }
  }
  seg_params_.ZeroGrad();
  fused_cache_.clear();
  audit.frozen_after = fusion_params_.Checksum();
  audit.trained_after = seg_params_.Checksum();
  audits_.push_back(audit);
}

void Trainer::FusionPhase(int round) {
  PhaseAudit audit{round, "fusion", seg_params_.Checksum(), 0, fusion_params_.Checksum(), 0};
  seg_params_.SetRequiresGrad(false);
  fusion_params_.SetRequiresGrad(true);
  const int epoch_iters = EpochIters();
  std::deque<std::vector<int>> queue;
  double sum_f = 0.0, sum_s = 0.0;
  int in_epoch = 0;
  for (int it = 0; it < options_.plan.fusion_iters; ++it) {
    if (queue.empty()) {
      for (auto& b : EpochBatches()) queue.push_back(std::move(b));
    }
    const std::vector<int> indices = queue.front();
    queue.pop_front();
    Batch batch = NextBatch(indices);

    fusion_params_.ZeroGrad();
    FusionResult res = model_.fusion.Forward(batch.visible, batch.infrared, model_.seg);
    FusionLossTerms terms = LossFusion(res.fused, batch.visible, batch.infrared,
                                       static_cast<float>(options_.eta), options_.pixel_form);
    Tensor logits = model_.seg.Forward(ReplicateToRgb(res.fused));
    Tensor l_seg = LossSeg(logits, batch.labels, options_.ignore_index);
    const float l1 = static_cast<float>(state_.lambdas[0]);
    const float l2 = static_cast<float>(state_.lambdas[1]);
    Tensor total = ops::Add(ops::Scale(terms.total, l1), ops::Scale(l_seg, l2));
    const long iteration = ++state_.iteration;
    CheckFinite(total.item(), "fusion loss", iteration);
    total.Backward();
    const double norm = ClipGradNorm(fusion_params_, options_.plan.clip_norm);
    CheckFinite(norm, "fusion gradient", iteration);
    if (norm > options_.plan.clip_norm && on_clip) on_clip({iteration, "fusion", norm});
    const double lr = FusionLr(fusion_opt_.steps());
    fusion_opt_.Step(lr);

    if (on_log) {
      on_log({iteration, "fusion", terms.ssim.item(), terms.mse.item(), terms.grad.item(),
              l_seg.item(), state_.lambdas[0], state_.lambdas[1], lr});
    }

    sum_f += terms.total.item();
    sum_s += l_seg.item();
    ++in_epoch;
    if (in_epoch == epoch_iters || it + 1 == options_.plan.fusion_iters) {
      const double mean_f = sum_f / in_epoch, mean_s = sum_s / in_epoch;
      state_.history.Record(0, mean_f);
      state_.history.Record(1, mean_s);
      state_.lambdas = strategy_->Weights(state_.history);
      state_.weights.push_back({round, iteration, mean_f, mean_s,
                                ConvergenceRate(state_.history, 0),
                                ConvergenceRate(state_.history, 1), state_.lambdas[0],
                                state_.lambdas[1]});
      sum_f = sum_s = 0.0;
      in_epoch = 0;
    }
  }
  fusion_params_.ZeroGrad();
  audit.frozen_after = seg_params_.Checksum();
  audit.trained_after = fusion_params_.Checksum();
  audits_.push_back(audit);
}

}  // namespace fseg
