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

// Fusion quality (EN, SD, SF, SCD) and segmentation (per-class recall and
// IoU, mAcc, mIoU) metrics.

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fseg/data.hpp"

namespace fseg {

// Shannon entropy in bits of the 256-bin histogram of values in [0,1].
double Entropy(std::span<const float> unit_values);

// Population standard deviation of the values as given.
double StdDev(std::span<const float> values);

// sqrt(RF^2 + CF^2); RF and CF are RMS horizontal / vertical first
// differences, each averaged over its own difference count.
double SpatialFrequency(std::span<const float> values, int height, int width);

// Pearson correlation; 0 when either side has zero variance.
double Pearson(std::span<const float> a, std::span<const float> b);

// r(u - y, x) + r(u - x, y).
double Scd(std::span<const float> u, std::span<const float> x, std::span<const float> y);

struct FusionScores {
  std::string id;
  double en = 0.0;
  double sd = 0.0;
  double sf = 0.0;
  double scd = 0.0;
};

// EN on 256 levels; SD and SF on the 0-255 scale.
FusionScores ScoreFusion(const Image& fused, const Image& visible_gray,
                         const Image& infrared, const std::string& id);

// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  // Skips pixels whose ground truth equals ignore_index.
  void Add(std::span<const int> predicted, std::span<const int> truth, int ignore_index);
  void Add(const LabelMap& predicted, const LabelMap& truth);
  void Merge(const ConfusionMatrix& other);

  int num_classes() const { return k_; }
  int64_t at(int truth, int predicted) const { return counts_[truth * k_ + predicted]; }
  int64_t total() const;

 private:
  int k_;
  std::vector<int64_t> counts_;
};

struct SegmentationScores {
  std::vector<double> acc;        // per class recall; NaN when absent from gt
  std::vector<double> iou;        // NaN when the class is in neither gt nor pred
  double macc = 0.0;              // mean over classes present in gt
  double miou = 0.0;              // mean over classes with a non-empty union
  int64_t pixels = 0;
};

// Throws EmptyMatrix when nothing was counted.
SegmentationScores ScoreSegmentation(const ConfusionMatrix& cm);

void WriteFusionCsv(std::ostream& out, const std::vector<FusionScores>& rows);
void WriteSegmentationCsv(std::ostream& out, const SegmentationScores& scores);

}  // namespace fseg
