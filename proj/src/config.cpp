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
#include "fseg/config.hpp"

#include <fstream>

#include "fseg/errors.hpp"

namespace fseg {

using nlohmann::json;

Config DeskProfile() {
  Config c;
  c.plan.seg_lr = 6e-4;
  return c;
}

Config FullProfile() {
  Config c;
  c.profile = "full";
  c.synth.spec.height = 480;
  c.synth.spec.width = 640;
  c.synth.train_count = 784;
  c.synth.val_count = 392;
  c.data.augment = true;
  c.plan.rounds = 8;
  c.plan.seg_iters = 10000;
  c.plan.fusion_iters = 5000;
  c.plan.warmup_iters = 3000;
  return c;
}

Config ProfileByName(const std::string& name) {
  if (name == "desk") return DeskProfile();
  if (name == "full") return FullProfile();
  throw Error(ErrorKind::kConfig, "unknown profile '" + name + "'");
}

namespace {

const char* PixelFormName(PixelLossForm f) {
  return f == PixelLossForm::kLiteral ? "literal" : "masked_residual";
}

const char* HiaModeName(HiaMode m) {
  return m == HiaMode::kSequential ? "sequential" : "parallel";
}

// Rejects keys of `doc` that `base` lacks, recursing into objects.
void CheckKeys(const json& base, const json& doc, const std::string& path) {
  FSEG_CHECK(doc.is_object(), ErrorKind::kConfig,
             "config" + path + " must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string where = path + "." + key;
    FSEG_CHECK(base.contains(key), ErrorKind::kConfig, "unknown config key " + where.substr(1));
    FSEG_CHECK(!value.is_null(), ErrorKind::kConfig, "config key " + where.substr(1) + " is null");
    if (base.at(key).is_object()) CheckKeys(base.at(key), value, where);
  }
}

template <typename T>
T Get(const json& obj, const char* key) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("config key ") + key + ": " + e.what());
  }
}

}  // namespace

json ConfigToJson(const Config& c) {
  const AugmentConfig& a = c.data.augment_config;
  const HiaConfig& h = c.fusion.hia;
  const RoundPlan& p = c.plan;
  return {
      {"profile", c.profile},
      {"seed", c.seed},
      {"data",
       {{"root", c.data.root},
        {"palette", c.data.palette},
        {"ignore_index", c.data.ignore_index},
        {"augment", c.data.augment},
        {"augmentation",
         {{"scale", {a.scale_min, a.scale_max}},
          {"crop", {a.crop_height, a.crop_width}},
          {"brightness", a.brightness},
          {"brightness_range", {a.brightness_min, a.brightness_max}}}}}},
      {"synth",
       {{"train_count", c.synth.train_count},
        {"val_count", c.synth.val_count},
        {"spec", SynthSpecToJson(c.synth.spec)}}},
      {"seg",
       {{"widths", c.seg.widths},
        {"depths", c.seg.depths},
        {"heads", c.seg.heads},
        {"sr_ratios", c.seg.sr_ratios},
        {"mlp_ratio", c.seg.mlp_ratio},
        {"decoder_width", c.seg.decoder_width},
        {"num_classes", c.seg.num_classes}}},
      {"fusion",
       {{"base_channels", c.fusion.base_channels},
        {"growth", c.fusion.growth},
        {"dense_layers", c.fusion.dense_layers},
        {"dilation", c.fusion.dilation},
        {"decoder_width", c.fusion.decoder_width},
        {"tap_channels", c.fusion.tap_channels},
        {"use_hia", c.fusion.use_hia},
        {"hia_mode", HiaModeName(c.fusion.hia_mode)},
        {"hia",
         {{"channels", h.channels},
          {"heads", h.heads},
          {"key_softmax", h.key_softmax},
          {"embed_unused_tokens", h.embed_unused_tokens}}}}},
      {"loss", {{"eta", c.loss.eta}, {"pixel_form", PixelFormName(c.loss.pixel_form)}}},
      {"weighting",
       {{"strategy", c.weighting.strategy},
        {"temperature", c.weighting.temperature},
        {"eta_pref", c.weighting.eta_pref},
        {"manual", c.weighting.manual}}},
      {"plan",
       {{"rounds", p.rounds},
        {"seg_iters", p.seg_iters},
        {"fusion_iters", p.fusion_iters},
        {"batch_size", p.batch_size},
        {"epoch_iters", p.epoch_iters},
        {"seg_lr", p.seg_lr},
        {"seg_lr_end", p.seg_lr_end},
        {"warmup_iters", p.warmup_iters},
        {"warmup_lr", p.warmup_lr},
        {"fusion_lr", p.fusion_lr},
        {"fusion_lr_end", p.fusion_lr_end},
        {"power", p.power},
        {"clip_norm", p.clip_norm}}},
  };
}

Config ConfigFromJson(const json& doc) {
  FSEG_CHECK(doc.is_object(), ErrorKind::kConfig, "config must be a JSON object");
  const std::string profile =
      doc.contains("profile") ? Get<std::string>(doc, "profile") : std::string("desk");
  json merged = ConfigToJson(ProfileByName(profile));
  CheckKeys(merged, doc, "");
  merged.merge_patch(doc);

  Config c;
  c.profile = profile;
  c.seed = Get<uint64_t>(merged, "seed");

  const json& d = merged.at("data");
  c.data.root = Get<std::string>(d, "root");
  c.data.palette = Get<std::string>(d, "palette");
  c.data.ignore_index = Get<int>(d, "ignore_index");
  c.data.augment = Get<bool>(d, "augment");
  const json& a = d.at("augmentation");
  const auto scale = Get<std::array<double, 2>>(a, "scale");
  const auto crop = Get<std::array<int, 2>>(a, "crop");
  const auto bright = Get<std::array<double, 2>>(a, "brightness_range");
  c.data.augment_config = {scale[0], scale[1], crop[0], crop[1],
                           Get<bool>(a, "brightness"), bright[0], bright[1]};

  const json& s = merged.at("synth");
  c.synth.train_count = Get<int>(s, "train_count");
  c.synth.val_count = Get<int>(s, "val_count");
  c.synth.spec = SynthSpecFromJson(s.at("spec"));

  const json& g = merged.at("seg");
  c.seg.widths = Get<std::array<int, 4>>(g, "widths");
  c.seg.depths = Get<std::array<int, 4>>(g, "depths");
  c.seg.heads = Get<std::array<int, 4>>(g, "heads");
  c.seg.sr_ratios = Get<std::array<int, 4>>(g, "sr_ratios");
  c.seg.mlp_ratio = Get<int>(g, "mlp_ratio");
  c.seg.decoder_width = Get<int>(g, "decoder_width");
  c.seg.num_classes = Get<int>(g, "num_classes");

  const json& f = merged.at("fusion");
  c.fusion.base_channels = Get<int>(f, "base_channels");
  c.fusion.growth = Get<int>(f, "growth");
  c.fusion.dense_layers = Get<int>(f, "dense_layers");
  c.fusion.dilation = Get<int>(f, "dilation");
  c.fusion.decoder_width = Get<int>(f, "decoder_width");
  c.fusion.tap_channels = Get<int>(f, "tap_channels");
  c.fusion.use_hia = Get<bool>(f, "use_hia");
  const auto mode = Get<std::string>(f, "hia_mode");
  if (mode == "sequential") c.fusion.hia_mode = HiaMode::kSequential;
  else if (mode == "parallel") c.fusion.hia_mode = HiaMode::kParallel;
  else throw Error(ErrorKind::kConfig, "unknown fusion.hia_mode '" + mode + "'");
  const json& h = f.at("hia");
  c.fusion.hia.channels = Get<int>(h, "channels");
  c.fusion.hia.heads = Get<int>(h, "heads");
  c.fusion.hia.key_softmax = Get<bool>(h, "key_softmax");
  c.fusion.hia.embed_unused_tokens = Get<bool>(h, "embed_unused_tokens");

  const json& l = merged.at("loss");
  c.loss.eta = Get<double>(l, "eta");
  const auto form = Get<std::string>(l, "pixel_form");
  if (form == "literal") c.loss.pixel_form = PixelLossForm::kLiteral;
  else if (form == "masked_residual") c.loss.pixel_form = PixelLossForm::kMaskedResidual;
  else throw Error(ErrorKind::kConfig, "unknown loss.pixel_form '" + form + "'");

  const json& w = merged.at("weighting");
  c.weighting.strategy = Get<std::string>(w, "strategy");
  c.weighting.temperature = Get<double>(w, "temperature");
  c.weighting.eta_pref = Get<std::vector<double>>(w, "eta_pref");
  c.weighting.manual = Get<std::vector<double>>(w, "manual");

  const json& p = merged.at("plan");
  c.plan.rounds = Get<int>(p, "rounds");
  c.plan.seg_iters = Get<int>(p, "seg_iters");
  c.plan.fusion_iters = Get<int>(p, "fusion_iters");
  c.plan.batch_size = Get<int>(p, "batch_size");
  c.plan.epoch_iters = Get<int>(p, "epoch_iters");
  c.plan.seg_lr = Get<double>(p, "seg_lr");
  c.plan.seg_lr_end = Get<double>(p, "seg_lr_end");
  c.plan.warmup_iters = Get<int>(p, "warmup_iters");
  c.plan.warmup_lr = Get<double>(p, "warmup_lr");
  c.plan.fusion_lr = Get<double>(p, "fusion_lr");
  c.plan.fusion_lr_end = Get<double>(p, "fusion_lr_end");
  c.plan.power = Get<double>(p, "power");
  c.plan.clip_norm = Get<double>(p, "clip_norm");

  ValidateConfig(c);
  return c;
}

void ValidateConfig(const Config& c) {
  ValidateSegNetConfig(c.seg);
  ValidateFusionConfig(c.fusion);
  ValidateSynthSpec(c.synth.spec);
  ValidateRoundPlan(c.plan);
  MakeWeightingStrategy(c.weighting, 2);
  FSEG_CHECK(c.synth.spec.num_classes == c.seg.num_classes, ErrorKind::kConfig,
             "synth.spec.num_classes must equal seg.num_classes");
  FSEG_CHECK(c.data.ignore_index < 0 || c.data.ignore_index >= c.seg.num_classes,
             ErrorKind::kConfig, "data.ignore_index collides with a class id");
  FSEG_CHECK(c.synth.train_count >= 0 && c.synth.val_count >= 0, ErrorKind::kConfig,
             "synth counts must be non-negative");
  FSEG_CHECK(c.loss.eta >= 0.0, ErrorKind::kConfig, "loss.eta must be non-negative");
  const AugmentConfig& a = c.data.augment_config;
  FSEG_CHECK(a.scale_min > 0 && a.scale_min <= a.scale_max, ErrorKind::kConfig,
             "augmentation scale range is invalid");
  FSEG_CHECK(a.crop_height > 0 && a.crop_width > 0, ErrorKind::kConfig,
             "augmentation crop must be positive");
  FSEG_CHECK(a.brightness_min > 0 && a.brightness_min <= a.brightness_max,
             ErrorKind::kConfig, "augmentation brightness range is invalid");
}

Config LoadConfig(const std::string& path) {
  std::ifstream in(path);
  FSEG_CHECK(in.good(), ErrorKind::kIo, "cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, "config " + path + ": " + e.what());
  }
  return ConfigFromJson(doc);
}

void SaveConfig(const std::string& path, const Config& config) {
  std::ofstream out(path);
  FSEG_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path);
  out << ConfigToJson(config).dump(2) << "\n";
}

TrainOptions MakeTrainOptions(const Config& c) {
  TrainOptions o;
  o.plan = c.plan;
  o.weighting = c.weighting;
  o.eta = c.loss.eta;
  o.pixel_form = c.loss.pixel_form;
  o.augment = c.data.augment;
  o.augment_config = c.data.augment_config;
  o.ignore_index = c.data.ignore_index;
  return o;
}

Palette ConfigPalette(const Config& c) {
  if (!c.data.palette.empty()) return Palette::Load(c.data.palette);
  return Palette::Generate(c.seg.num_classes, c.data.ignore_index);
}

}  // namespace fseg
