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
#include "fseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "fseg/errors.hpp"

namespace fseg {

double Entropy(std::span<const float> unit_values) {
  if (unit_values.empty()) return 0.0;
  std::vector<int64_t> hist(256, 0);
  for (float v : unit_values) {
    hist[std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)]++;
  }
  const double n = static_cast<double>(unit_values.size());
  double h = 0.0;
  for (int64_t c : hist) {
    if (c == 0) continue;
    const double p = c / n;
    h -= p * std::log2(p);
  }
  return h;
}

double StdDev(std::span<const float> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (float v : values) mean += v;
  mean /= values.size();
  double var = 0.0;
  for (float v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / values.size());
}

double SpatialFrequency(std::span<const float> v, int height, int width) {
  FSEG_CHECK(static_cast<int64_t>(v.size()) == static_cast<int64_t>(height) * width,
             ErrorKind::kShapeMismatch, "spatial frequency: size mismatch");
  double rf = 0.0, cf = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 1; x < width; ++x) {
      const double d = v[y * width + x] - v[y * width + x - 1];
      rf += d * d;
    }
  }
  for (int y = 1; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double d = v[y * width + x] - v[(y - 1) * width + x];
      cf += d * d;
    }
  }
  const double nr = static_cast<double>(height) * (width - 1);
  const double nc = static_cast<double>(height - 1) * width;
  rf = nr > 0 ? rf / nr : 0.0;
  cf = nc > 0 ? cf / nc : 0.0;
  return std::sqrt(rf + cf);
}

double Pearson(std::span<const float> a, std::span<const float> b) {
  FSEG_CHECK(a.size() == b.size(), ErrorKind::kShapeMismatch, "Pearson: size mismatch");
  if (a.empty()) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double Scd(std::span<const float> u, std::span<const float> x, std::span<const float> y) {
  FSEG_CHECK(u.size() == x.size() && u.size() == y.size(), ErrorKind::kShapeMismatch,
             "SCD: size mismatch");
  std::vector<float> u_minus_y(u.size()), u_minus_x(u.size());
  for (size_t i = 0; i < u.size(); ++i) {
    u_minus_y[i] = u[i] - y[i];
    u_minus_x[i] = u[i] - x[i];
  }
  return Pearson(u_minus_y, x) + Pearson(u_minus_x, y);
}

FusionScores ScoreFusion(const Image& fused, const Image& visible_gray,
                         const Image& infrared, const std::string& id) {
  FSEG_CHECK(fused.channels == 1 && visible_gray.channels == 1 && infrared.channels == 1,
             ErrorKind::kShapeMismatch, "fusion metrics expect gray images");
  FSEG_CHECK(fused.size() == visible_gray.size() && fused.size() == infrared.size(),
             ErrorKind::kShapeMismatch, "fusion metrics: size mismatch");
  std::vector<float> scaled(fused.pixels.size());
  for (size_t i = 0; i < scaled.size(); ++i) scaled[i] = fused.pixels[i] * 255.0f;
  FusionScores s;
  s.id = id;
  s.en = Entropy(fused.pixels);
  s.sd = StdDev(scaled);
  s.sf = SpatialFrequency(scaled, fused.height, fused.width);
  s.scd = Scd(fused.pixels, visible_gray.pixels, infrared.pixels);
  return s;
}

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), counts_(static_cast<size_t>(num_classes) * num_classes, 0) {
  FSEG_CHECK(num_classes > 0, ErrorKind::kConfig, "confusion matrix needs classes");
}

void ConfusionMatrix::Add(std::span<const int> predicted, std::span<const int> truth,
                          int ignore_index) {
  FSEG_CHECK(predicted.size() == truth.size(), ErrorKind::kShapeMismatch,
             "prediction and ground truth differ in size");
  for (size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    if (t == ignore_index) continue;
    const int p = predicted[i];
    FSEG_CHECK(t >= 0 && t < k_ && p >= 0 && p < k_, ErrorKind::kShapeMismatch,
               "class id out of range in confusion update");
    counts_[t * k_ + p]++;
  }
}

void ConfusionMatrix::Add(const LabelMap& predicted, const LabelMap& truth) {
  FSEG_CHECK(predicted.height == truth.height && predicted.width == truth.width,
             ErrorKind::kShapeMismatch, "label maps differ in size");
  Add(predicted.classes, truth.classes, truth.ignore_index);
}

void ConfusionMatrix::Merge(const ConfusionMatrix& other) {
  FSEG_CHECK(other.k_ == k_, ErrorKind::kShapeMismatch, "confusion class count mismatch");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts_) t += c;
  return t;
}

SegmentationScores ScoreSegmentation(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  SegmentationScores s;
  s.pixels = cm.total();
  FSEG_CHECK(s.pixels > 0, ErrorKind::kEmptyMatrix, "no counted pixels");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.acc.assign(k, nan);
  s.iou.assign(k, nan);
  double acc_sum = 0.0, iou_sum = 0.0;
  int acc_n = 0, iou_n = 0;
  for (int c = 0; c < k; ++c) {
    int64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const int64_t tp = cm.at(c, c);
    if (row > 0) {
      s.acc[c] = static_cast<double>(tp) / row;
      acc_sum += s.acc[c];
      ++acc_n;
    }
    const int64_t uni = row + col - tp;
    if (uni > 0) {
      s.iou[c] = static_cast<double>(tp) / uni;
      iou_sum += s.iou[c];
      ++iou_n;
    }
  }
  s.macc = acc_n ? acc_sum / acc_n : 0.0;
  s.miou = iou_n ? iou_sum / iou_n : 0.0;
  return s;
}

void WriteFusionCsv(std::ostream& out, const std::vector<FusionScores>& rows) {
  out << "id,en,sd,sf,scd\n";
  out << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.id << "," << r.en << "," << r.sd << "," << r.sf << "," << r.scd << "\n";
  }
}

void WriteSegmentationCsv(std::ostream& out, const SegmentationScores& s) {
  out << "class,acc,iou\n";
  out << std::setprecision(9);
  auto field = [](double v) {
    if (std::isnan(v)) return std::string();
    std::ostringstream o;
    o << std::setprecision(9) << v;
    return o.str();
  };
  for (size_t c = 0; c < s.acc.size(); ++c) {
    out << c << "," << field(s.acc[c]) << "," << field(s.iou[c]) << "\n";
  }
  out << "mean," << s.macc << "," << s.miou << "\n";
}

}  // namespace fseg
