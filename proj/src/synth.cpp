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
#include <algorithm>
#include <cmath>

#include "fseg/data.hpp"
#include "fseg/errors.hpp"

namespace fseg {

namespace {

constexpr float kThermalLevel = 0.95f;
constexpr float kThermalJitter = 0.03f;

float Frac(double v) { return static_cast<float>(v - std::floor(v)); }

float Albedo(int cls) { return 0.12f + 0.76f * Frac(cls * 0.381966 + 0.1); }

// RGB multipliers with unit luma, so the tint leaves Y unchanged.
std::array<float, 3> Tint(int cls) {
  if (cls == 0) return {1.0f, 1.0f, 1.0f};
  const double theta = cls * 2.399963;
  std::array<double, 3> t{1.0 + 0.25 * std::cos(theta), 1.0 + 0.25 * std::cos(theta - 2.0944),
                          1.0 + 0.25 * std::cos(theta + 2.0944)};
  const double y = 0.299 * t[0] + 0.587 * t[1] + 0.114 * t[2];
  return {static_cast<float>(t[0] / y), static_cast<float>(t[1] / y),
          static_cast<float>(t[2] / y)};
}

std::vector<float> BlurField(const std::vector<float>& field, int h, int w, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    sum += (k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma)));
  }
  for (double& v : k) v /= sum;
  auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  std::vector<float> tmp(field.size()), out(field.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        s += k[i + radius] * field[static_cast<size_t>(y) * w + clampi(x + i, w)];
      }
      tmp[static_cast<size_t>(y) * w + x] = static_cast<float>(s);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        s += k[i + radius] * tmp[static_cast<size_t>(clampi(y + i, h)) * w + x];
      }
      out[static_cast<size_t>(y) * w + x] = static_cast<float>(s);
    }
  }
  return out;
}

}  // namespace

void ValidateSynthSpec(const SynthSpec& spec) {
  FSEG_CHECK(spec.height >= 8 && spec.width >= 8, ErrorKind::kConfig,
             "synthetic scenes must be at least 8x8");
  FSEG_CHECK(spec.num_classes >= 2, ErrorKind::kConfig, "num_classes must be >= 2");
  FSEG_CHECK(spec.shapes_min >= 0 && spec.shapes_min <= spec.shapes_max,
             ErrorKind::kConfig, "invalid shapes_per_scene range");
  for (int c : spec.thermal_classes) {
    FSEG_CHECK(c >= 0 && c < spec.num_classes, ErrorKind::kConfig,
               "thermal class " + std::to_string(c) + " is not a class id");
  }
}

nlohmann::json SynthSpecToJson(const SynthSpec& spec) {
  const char* corruption = spec.visible_corruption == Corruption::kLowLight ? "low_light"
                           : spec.visible_corruption == Corruption::kFog    ? "fog"
                                                                            : "none";
  return {{"image_size", {spec.height, spec.width}},
          {"num_classes", spec.num_classes},
          {"shapes_per_scene", {spec.shapes_min, spec.shapes_max}},
          {"thermal_classes", spec.thermal_classes},
          {"visible_corruption", corruption},
          {"seed", spec.seed}};
}

SynthSpec SynthSpecFromJson(const nlohmann::json& doc) {
  FSEG_CHECK(doc.is_object(), ErrorKind::kConfig, "synth spec must be an object");
  SynthSpec spec;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "image_size") {
        spec.height = value.at(0).get<int>();
        spec.width = value.at(1).get<int>();
      } else if (key == "num_classes") {
        spec.num_classes = value.get<int>();
      } else if (key == "shapes_per_scene") {
        spec.shapes_min = value.at(0).get<int>();
        spec.shapes_max = value.at(1).get<int>();
      } else if (key == "thermal_classes") {
        spec.thermal_classes = value.get<std::vector<int>>();
      } else if (key == "visible_corruption") {
        const auto s = value.get<std::string>();
        if (s == "none") spec.visible_corruption = Corruption::kNone;
        else if (s == "low_light") spec.visible_corruption = Corruption::kLowLight;
        else if (s == "fog") spec.visible_corruption = Corruption::kFog;
        else throw Error(ErrorKind::kConfig, "unknown corruption " + s);
      } else if (key == "seed") {
        spec.seed = value.get<uint64_t>();
      } else {
        throw Error(ErrorKind::kConfig, "unknown synth key " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("synth spec: ") + e.what());
  }
  ValidateSynthSpec(spec);
  return spec;
}

Sample SynthScene(const SynthSpec& spec, Rng& rng) {
  ValidateSynthSpec(spec);
  const int h = spec.height, w = spec.width;
  const size_t n = static_cast<size_t>(h) * w;

  LabelMap label;
  label.height = h;
  label.width = w;
  label.num_classes = spec.num_classes;
  label.classes.assign(n, 0);

  const int shapes = rng.UniformInt(spec.shapes_min, spec.shapes_max);
  for (int s = 0; s < shapes; ++s) {
    const int cls = rng.UniformInt(1, spec.num_classes - 1);
    const bool ellipse = rng.UniformInt(0, 1) == 1;
    const double sh = rng.Uniform(0.22, 0.45) * h;
    const double sw = rng.Uniform(0.22, 0.45) * w;
    const double cy = rng.Uniform(sh / 2, h - sh / 2);
    const double cx = rng.Uniform(sw / 2, w - sw / 2);
    for (int y = 0; y < h; ++y) {
      const double dy = (y + 0.5 - cy) / (sh / 2);
      for (int x = 0; x < w; ++x) {
        const double dx = (x + 0.5 - cx) / (sw / 2);
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0
                                    : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside) label.at(y, x) = cls;
      }
    }
  }

  // Background texture parameters.
  const double fx = rng.Uniform(0.08, 0.25), fy = rng.Uniform(0.08, 0.25);
  const double p1 = rng.Uniform(0.0, 2 * M_PI), p2 = rng.Uniform(0.0, 2 * M_PI);
  const double p3 = rng.Uniform(0.0, 2 * M_PI);
  const double ir_slope = rng.Uniform(-0.06, 0.06);

  std::vector<bool> thermal(spec.num_classes, false);
  for (int c : spec.thermal_classes) thermal[c] = true;

  Sample out;
  out.pair.visible = Image(h, w, 3, ColorSpace::kRgb);
  out.pair.infrared = Image(h, w, 1, ColorSpace::kGray);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int cls = label.at(y, x);
      float lum;
      if (cls == 0) {
        lum = static_cast<float>(0.45 + 0.08 * std::sin(fx * x + p1) * std::cos(fy * y + p2) +
                                 0.04 * std::sin(0.7 * fx * (x + y) + p3) +
                                 0.015 * rng.Normal());
      } else {
        const int period = 3 + 2 * cls;
        const int coord = (cls % 2) ? x : y;
        const float stripe = (coord % period) < period / 2 ? 0.05f : -0.05f;
        lum = Albedo(cls) + stripe + static_cast<float>(0.015 * rng.Normal());
      }
      lum = std::clamp(lum, 0.0f, 1.0f);
      const auto tint = Tint(cls);
      for (int c = 0; c < 3; ++c) {
        out.pair.visible.at(y, x, c) = std::clamp(lum * tint[c], 0.0f, 1.0f);
      }

      float ir;
      if (cls != 0 && thermal[cls]) {
        ir = kThermalLevel + static_cast<float>(rng.Uniform(-kThermalJitter, kThermalJitter));
      } else if (cls != 0) {
        ir = 0.34f + 0.03f * static_cast<float>(cls % 3) +
             static_cast<float>(0.01 * rng.Normal());
      } else {
        ir = static_cast<float>(0.2 + ir_slope * (static_cast<double>(y) / h - 0.5) +
                                0.01 * rng.Normal());
      }
      out.pair.infrared.at(y, x) = std::clamp(ir, 0.0f, 1.0f);
    }
  }

  switch (spec.visible_corruption) {
    case Corruption::kNone:
      break;
    case Corruption::kLowLight:
      for (float& v : out.pair.visible.pixels) {
        v = std::clamp(v * 0.2f + static_cast<float>(0.01 * rng.Normal()), 0.0f, 1.0f);
      }
      break;
    case Corruption::kFog: {
      std::vector<float> field(n);
      for (float& v : field) v = static_cast<float>(rng.Uniform());
      field = BlurField(field, h, w, std::max(1.0, h / 8.0));
      const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
      const float range = std::max(*hi - *lo, 1e-6f);
      for (size_t i = 0; i < n; ++i) {
        const float alpha = 0.3f + 0.5f * (field[i] - *lo) / range;
        for (int c = 0; c < 3; ++c) {
          float& v = out.pair.visible.pixels[3 * i + c];
          v = std::clamp(v * (1.0f - alpha) + 0.8f * alpha, 0.0f, 1.0f);
        }
      }
      break;
    }
  }
  out.label = std::move(label);
  return out;
}

}  // namespace fseg
