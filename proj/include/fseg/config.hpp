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

// Run configuration. Every field has a default; JSON documents overlay a
// named profile and may not contain unknown keys.

#include <cstdint>
#include <string>

#include "fseg/data.hpp"
#include "fseg/fusion_net.hpp"
#include "fseg/losses.hpp"
#include "fseg/seg_net.hpp"
#include "fseg/trainer.hpp"
#include "fseg/weighting.hpp"
#include "json.hpp"

namespace fseg {

struct DataConfig {
  std::string root = "data";
  // Empty: palette generated from num_classes.
  std::string palette;
  int ignore_index = 255;
  bool augment = false;
  AugmentConfig augment_config;
};

struct SynthConfig {
  SynthSpec spec;
  int train_count = 16;
  int val_count = 4;
};

struct LossConfig {
  double eta = 0.5;
  PixelLossForm pixel_form = PixelLossForm::kLiteral;
};

struct Config {
  std::string profile = "desk";
  uint64_t seed = 0;
  DataConfig data;
  SynthConfig synth;
  SegNetConfig seg;
  FusionConfig fusion;
  LossConfig loss;
  WeightingConfig weighting;
  RoundPlan plan;

  int num_classes() const { return seg.num_classes; }
};

// 96x96 scenes, iteration counts of the full schedule divided by 25 and a
// segmentation learning rate of 6e-4 to match the shorter schedule.
Config DeskProfile();
// Full schedule: 8 rounds of 10k segmentation and 5k fusion iterations,
// 3k warmup iterations, 360x360 crops with augmentation.
Config FullProfile();
Config ProfileByName(const std::string& name);

nlohmann::json ConfigToJson(const Config& config);
// Overlays `doc` on the profile it names (default "desk"). Throws
// ConfigError on unknown keys, wrong types or invalid values.
Config ConfigFromJson(const nlohmann::json& doc);
Config LoadConfig(const std::string& path);
void SaveConfig(const std::string& path, const Config& config);
void ValidateConfig(const Config& config);

TrainOptions MakeTrainOptions(const Config& config);
Palette ConfigPalette(const Config& config);

}  // namespace fseg
