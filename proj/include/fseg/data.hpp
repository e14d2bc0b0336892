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

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fseg/image.hpp"
#include "fseg/nn.hpp"
#include "json.hpp"

namespace fseg {

// Registered visible (gray or RGB) and infrared (gray) rasters.
struct AlignedPair {
  Image visible;
  Image infrared;
  std::string id;
};

struct LabelMap {
  int height = 0;
  int width = 0;
  int num_classes = 0;
  int ignore_index = 255;
  std::vector<int> classes;  // row-major

  int at(int y, int x) const { return classes[static_cast<size_t>(y) * width + x]; }
  int& at(int y, int x) { return classes[static_cast<size_t>(y) * width + x]; }
};

void ValidatePair(const AlignedPair& pair);
void ValidateLabel(const LabelMap& label);

// Color <-> class table. On disk: JSON object mapping "R,G,B" to a class id.
class Palette {
 public:
  Palette() = default;
  static Palette FromJson(const nlohmann::json& doc);
  static Palette Load(const std::string& path);
  // Distinct colors for class ids [0, num_classes); ignore_index -> white.
  static Palette Generate(int num_classes, int ignore_index);

  nlohmann::json ToJson() const;
  void Save(const std::string& path) const;

  void Set(std::array<uint8_t, 3> rgb, int class_id);
  // Returns false when the color has no entry.
  bool Lookup(std::array<uint8_t, 3> rgb, int* class_id) const;
  // First color mapped to `class_id`; throws UnknownColor when absent.
  std::array<uint8_t, 3> ColorOf(int class_id) const;

 private:
  std::map<std::array<uint8_t, 3>, int> to_class_;
};

// Visible keeps its channel count; infrared is channel-averaged to gray.
AlignedPair LoadPair(const std::string& visible_path, const std::string& infrared_path);
LabelMap LoadLabel(const std::string& path, int num_classes, int ignore_index,
                   const Palette& palette);
void SaveLabel(const std::string& path, const LabelMap& label, const Palette& palette);

struct AugmentConfig {
  double scale_min = 0.5;
  double scale_max = 2.0;
  int crop_height = 360;
  int crop_width = 360;
  bool brightness = true;
  double brightness_min = 0.75;
  double brightness_max = 1.25;
};

struct Sample {
  AlignedPair pair;
  LabelMap label;
};

// Random resize (bilinear images, nearest labels), zero / ignore padding up
// to the crop size, random crop, then multiplicative brightness on the
// images. The same geometry is applied to all three rasters.
Sample Augment(const AlignedPair& pair, const LabelMap& label,
               const AugmentConfig& config, Rng& rng);

// Bilinear / nearest resampling with half-pixel centres.
Image ResizeImage(const Image& img, int out_h, int out_w);
LabelMap ResizeLabelNearest(const LabelMap& label, int out_h, int out_w);
// Nearest-neighbour source coordinate used by ResizeLabelNearest.
int NearestSource(int out_index, int in_size, int out_size);

// root/{Visible,Infrared,Label}/<id>.png
struct DatasetLayout {
  static std::string VisiblePath(const std::string& root, const std::string& id);
  static std::string InfraredPath(const std::string& root, const std::string& id);
  static std::string LabelPath(const std::string& root, const std::string& id);
  // Ids present in all three folders, sorted. Throws IoError when the
  // folders are missing.
  static std::vector<std::string> ListIds(const std::string& root);
  // Ids with both images present; labels not required.
  static std::vector<std::string> ListPairIds(const std::string& root);
};

Sample LoadSample(const std::string& root, const std::string& id, int num_classes,
                  int ignore_index, const Palette& palette);

enum class Corruption { kNone, kLowLight, kFog };

struct SynthSpec {
  int height = 96;
  int width = 96;
  int num_classes = 4;
  int shapes_min = 2;
  int shapes_max = 4;
  std::vector<int> thermal_classes = {1};
  Corruption visible_corruption = Corruption::kNone;
  uint64_t seed = 0;
};

void ValidateSynthSpec(const SynthSpec& spec);
nlohmann::json SynthSpecToJson(const SynthSpec& spec);
SynthSpec SynthSpecFromJson(const nlohmann::json& doc);

// Random rectangles / ellipses over textured backgrounds. Thermal-class
// shapes are rendered hot (>= 0.9) in infrared; visible carries per-class
// albedo, stripes and tint. Deterministic in (spec, rng state).
Sample SynthScene(const SynthSpec& spec, Rng& rng);

}  // namespace fseg
