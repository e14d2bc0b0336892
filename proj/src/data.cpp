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
#include "fseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fseg/errors.hpp"

namespace fseg {

namespace fs = std::filesystem;

void ValidatePair(const AlignedPair& pair) {
  ValidateImage(pair.visible);
  ValidateImage(pair.infrared);
  FSEG_CHECK(pair.infrared.channels == 1, ErrorKind::kShapeMismatch,
             "infrared must be single-channel");
  FSEG_CHECK(pair.visible.height == pair.infrared.height &&
                 pair.visible.width == pair.infrared.width,
             ErrorKind::kShapeMismatch,
             "visible " + std::to_string(pair.visible.height) + "x" +
                 std::to_string(pair.visible.width) + " vs infrared " +
                 std::to_string(pair.infrared.height) + "x" +
                 std::to_string(pair.infrared.width));
}

void ValidateLabel(const LabelMap& label) {
  FSEG_CHECK(label.num_classes > 0, ErrorKind::kConfig, "num_classes must be positive");
  FSEG_CHECK(label.classes.size() == static_cast<size_t>(label.height) * label.width,
             ErrorKind::kShapeMismatch, "label buffer size mismatch");
  for (int c : label.classes) {
    FSEG_CHECK((c >= 0 && c < label.num_classes) || c == label.ignore_index,
               ErrorKind::kShapeMismatch, "invalid class id " + std::to_string(c));
  }
}

namespace {

std::array<uint8_t, 3> ParseColorKey(const std::string& key) {
  std::array<int, 3> v{};
  char c1 = 0, c2 = 0;
  std::istringstream in(key);
  in >> v[0] >> c1 >> v[1] >> c2 >> v[2];
  FSEG_CHECK(!in.fail() && c1 == ',' && c2 == ',' && in.peek() == EOF,
             ErrorKind::kConfig, "palette key must read \"R,G,B\": " + key);
  std::array<uint8_t, 3> rgb{};
  for (int i = 0; i < 3; ++i) {
    FSEG_CHECK(v[i] >= 0 && v[i] <= 255, ErrorKind::kConfig,
               "palette component out of range: " + key);
    rgb[i] = static_cast<uint8_t>(v[i]);
  }
  return rgb;
}

std::string ColorKey(const std::array<uint8_t, 3>& rgb) {
  return std::to_string(rgb[0]) + "," + std::to_string(rgb[1]) + "," +
         std::to_string(rgb[2]);
}

}  // namespace

Palette Palette::FromJson(const nlohmann::json& doc) {
  FSEG_CHECK(doc.is_object(), ErrorKind::kConfig, "palette must be a JSON object");
  Palette p;
  for (const auto& [key, value] : doc.items()) {
    FSEG_CHECK(value.is_number_integer(), ErrorKind::kConfig,
               "palette value for " + key + " must be an integer class id");
    p.Set(ParseColorKey(key), value.get<int>());
  }
  return p;
}

Palette Palette::Load(const std::string& path) {
  std::ifstream in(path);
  FSEG_CHECK(in.good(), ErrorKind::kIo, "cannot open palette " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, path + ": " + e.what());
  }
  return FromJson(doc);
}

Palette Palette::Generate(int num_classes, int ignore_index) {
  Palette p;
  p.Set({0, 0, 0}, 0);
  for (int c = 1; c < num_classes; ++c) {
    // Spread hues with a golden-ratio walk; distinctness only matters
    // within one palette.
    const double h = std::fmod(c * 0.618033988749895, 1.0) * 6.0;
    const int sector = static_cast<int>(h);
    const double f = h - sector;
    double r = 0, g = 0, b = 0;
    switch (sector) {
      case 0: r = 1; g = f; break;
      case 1: r = 1 - f; g = 1; break;
      case 2: g = 1; b = f; break;
      case 3: g = 1 - f; b = 1; break;
      case 4: r = f; b = 1; break;
      default: r = 1; b = 1 - f; break;
    }
    const double level = 0.45 + 0.5 * ((c * 7) % 5) / 4.0;
    std::array<uint8_t, 3> rgb{static_cast<uint8_t>(std::lround(r * level * 255)),
                               static_cast<uint8_t>(std::lround(g * level * 255)),
                               static_cast<uint8_t>(std::lround(b * level * 255))};
    int dummy;
    while (p.Lookup(rgb, &dummy)) rgb[2] = static_cast<uint8_t>(rgb[2] + 1);
    p.Set(rgb, c);
  }
  p.Set({255, 255, 255}, ignore_index);
  return p;
}

nlohmann::json Palette::ToJson() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [rgb, cls] : to_class_) doc[ColorKey(rgb)] = cls;
  return doc;
}

void Palette::Save(const std::string& path) const {
  std::ofstream out(path);
  FSEG_CHECK(out.good(), ErrorKind::kIo, "cannot write palette " + path);
  out << ToJson().dump(2) << "\n";
}

void Palette::Set(std::array<uint8_t, 3> rgb, int class_id) { to_class_[rgb] = class_id; }

bool Palette::Lookup(std::array<uint8_t, 3> rgb, int* class_id) const {
  auto it = to_class_.find(rgb);
  if (it == to_class_.end()) return false;
  *class_id = it->second;
  return true;
}

std::array<uint8_t, 3> Palette::ColorOf(int class_id) const {
  for (const auto& [rgb, cls] : to_class_) {
    if (cls == class_id) return rgb;
  }
  throw Error(ErrorKind::kUnknownColor, "no palette color for class " +
                                            std::to_string(class_id));
}

AlignedPair LoadPair(const std::string& visible_path, const std::string& infrared_path) {
  AlignedPair pair;
  pair.visible = ToImage(ReadPng(visible_path));
  pair.infrared = ChannelMean(ToImage(ReadPng(infrared_path)));
  pair.id = fs::path(visible_path).stem().string();
  ValidatePair(pair);
  return pair;
}

LabelMap LoadLabel(const std::string& path, int num_classes, int ignore_index,
                   const Palette& palette) {
  const Raster8 raster = ReadPng(path);
  LabelMap label;
  label.height = raster.height;
  label.width = raster.width;
  label.num_classes = num_classes;
  label.ignore_index = ignore_index;
  label.classes.resize(static_cast<size_t>(raster.height) * raster.width);
  for (size_t i = 0; i < label.classes.size(); ++i) {
    std::array<uint8_t, 3> rgb;
    if (raster.channels == 1) {
      rgb = {raster.bytes[i], raster.bytes[i], raster.bytes[i]};
    } else {
      rgb = {raster.bytes[3 * i], raster.bytes[3 * i + 1], raster.bytes[3 * i + 2]};
    }
    int cls;
    if (!palette.Lookup(rgb, &cls)) {
      throw Error(ErrorKind::kUnknownColor,
                  path + ": color " + ColorKey(rgb) + " is not in the palette");
    }
    label.classes[i] = cls;
  }
  ValidateLabel(label);
  return label;
}

void SaveLabel(const std::string& path, const LabelMap& label, const Palette& palette) {
  Raster8 raster;
  raster.height = label.height;
  raster.width = label.width;
  raster.channels = 3;
  raster.bytes.resize(label.classes.size() * 3);
  std::map<int, std::array<uint8_t, 3>> cache;
  for (size_t i = 0; i < label.classes.size(); ++i) {
    const int c = label.classes[i];
    auto it = cache.find(c);
    if (it == cache.end()) it = cache.emplace(c, palette.ColorOf(c)).first;
    std::copy(it->second.begin(), it->second.end(), raster.bytes.begin() + 3 * i);
  }
  WritePng(path, raster);
}

int NearestSource(int out_index, int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const int src = static_cast<int>(std::floor((out_index + 0.5) * scale));
  return std::min(src, in_size - 1);
}

Image ResizeImage(const Image& img, int out_h, int out_w) {
  if (out_h == img.height && out_w == img.width) return img;
  Image out(out_h, out_w, img.channels, img.color_space);
  auto taps = [](int in, int out_n) {
    std::vector<std::pair<int, float>> t(out_n);
    const double scale = static_cast<double>(in) / out_n;
    for (int o = 0; o < out_n; ++o) {
      double src = std::max(0.0, (o + 0.5) * scale - 0.5);
      int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
      t[o] = {i0, static_cast<float>(src - i0)};
    }
    return t;
  };
  const auto ty = taps(img.height, out_h);
  const auto tx = taps(img.width, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int y0 = ty[y].first, y1 = std::min(y0 + 1, img.height - 1);
    const float fy = ty[y].second;
    for (int x = 0; x < out_w; ++x) {
      const int x0 = tx[x].first, x1 = std::min(x0 + 1, img.width - 1);
      const float fx = tx[x].second;
      for (int c = 0; c < img.channels; ++c) {
        const float a = img.at(y0, x0, c), b = img.at(y0, x1, c);
        const float d = img.at(y1, x0, c), e = img.at(y1, x1, c);
        const float top = a + fx * (b - a);
        const float bot = d + fx * (e - d);
        out.at(y, x, c) = top + fy * (bot - top);
      }
    }
  }
  return out;
}

LabelMap ResizeLabelNearest(const LabelMap& label, int out_h, int out_w) {
  LabelMap out = label;
  out.height = out_h;
  out.width = out_w;
  out.classes.assign(static_cast<size_t>(out_h) * out_w, label.ignore_index);
  for (int y = 0; y < out_h; ++y) {
    const int sy = NearestSource(y, label.height, out_h);
    for (int x = 0; x < out_w; ++x) {
      out.at(y, x) = label.at(sy, NearestSource(x, label.width, out_w));
    }
  }
  return out;
}

namespace {

Image PadCrop(const Image& img, int top, int left, int h, int w) {
  // Offsets may be negative when the source is smaller than the window;
  // those samples are zero.
  Image out(h, w, img.channels, img.color_space, 0.0f);
  for (int y = 0; y < h; ++y) {
    const int sy = y + top;
    if (sy < 0 || sy >= img.height) continue;
    for (int x = 0; x < w; ++x) {
      const int sx = x + left;
      if (sx < 0 || sx >= img.width) continue;
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

LabelMap PadCrop(const LabelMap& label, int top, int left, int h, int w) {
  LabelMap out = label;
  out.height = h;
  out.width = w;
  out.classes.assign(static_cast<size_t>(h) * w, label.ignore_index);
  for (int y = 0; y < h; ++y) {
    const int sy = y + top;
    if (sy < 0 || sy >= label.height) continue;
    for (int x = 0; x < w; ++x) {
      const int sx = x + left;
      if (sx < 0 || sx >= label.width) continue;
      out.at(y, x) = label.at(sy, sx);
    }
  }
  return out;
}

void ApplyBrightness(Image& img, float factor) {
  for (float& v : img.pixels) v = std::clamp(v * factor, 0.0f, 1.0f);
}

}  // namespace

Sample Augment(const AlignedPair& pair, const LabelMap& label,
               const AugmentConfig& config, Rng& rng) {
  FSEG_CHECK(config.scale_min > 0.0 && config.scale_min <= config.scale_max,
             ErrorKind::kConfig, "empty resize ratio range");
  FSEG_CHECK(config.crop_height >= 8 && config.crop_width >= 8, ErrorKind::kConfig,
             "crop size must be at least 8x8");
  FSEG_CHECK(config.brightness_min > 0.0 && config.brightness_min <= config.brightness_max,
             ErrorKind::kConfig, "empty brightness range");
  ValidatePair(pair);
  FSEG_CHECK(label.height == pair.visible.height && label.width == pair.visible.width,
             ErrorKind::kShapeMismatch, "label and images differ in size");

  const double ratio = rng.Uniform(config.scale_min, config.scale_max);
  const int rh = std::max(1, static_cast<int>(std::lround(pair.visible.height * ratio)));
  const int rw = std::max(1, static_cast<int>(std::lround(pair.visible.width * ratio)));

  Sample out;
  out.pair.id = pair.id;
  Image vis = ResizeImage(pair.visible, rh, rw);
  Image ir = ResizeImage(pair.infrared, rh, rw);
  LabelMap lab = (rh == label.height && rw == label.width)
                     ? label
                     : ResizeLabelNearest(label, rh, rw);

  // Padding goes after the image (bottom/right); the crop window is drawn
  // over the padded extent.
  const int top = rh > config.crop_height ? rng.UniformInt(0, rh - config.crop_height) : 0;
  const int left = rw > config.crop_width ? rng.UniformInt(0, rw - config.crop_width) : 0;
  out.pair.visible = PadCrop(vis, top, left, config.crop_height, config.crop_width);
  out.pair.infrared = PadCrop(ir, top, left, config.crop_height, config.crop_width);
  out.label = PadCrop(lab, top, left, config.crop_height, config.crop_width);

  if (config.brightness) {
    ApplyBrightness(out.pair.visible,
                    static_cast<float>(rng.Uniform(config.brightness_min, config.brightness_max)));
    ApplyBrightness(out.pair.infrared,
                    static_cast<float>(rng.Uniform(config.brightness_min, config.brightness_max)));
  }
  return out;
}

std::string DatasetLayout::VisiblePath(const std::string& root, const std::string& id) {
  return (fs::path(root) / "Visible" / (id + ".png")).string();
}

std::string DatasetLayout::InfraredPath(const std::string& root, const std::string& id) {
  return (fs::path(root) / "Infrared" / (id + ".png")).string();
}

std::string DatasetLayout::LabelPath(const std::string& root, const std::string& id) {
  return (fs::path(root) / "Label" / (id + ".png")).string();
}

namespace {

std::set<std::string> PngStems(const std::string& root, const char* sub) {
  const fs::path dir = fs::path(root) / sub;
  FSEG_CHECK(fs::is_directory(dir), ErrorKind::kIo, "missing directory " + dir.string());
  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".png") ids.insert(entry.path().stem().string());
  }
  return ids;
}

}  // namespace

std::vector<std::string> DatasetLayout::ListIds(const std::string& root) {
  const auto lab = PngStems(root, "Label");
  std::vector<std::string> ids;
  for (const auto& id : ListPairIds(root)) {
    if (lab.count(id)) ids.push_back(id);
  }
  return ids;
}

std::vector<std::string> DatasetLayout::ListPairIds(const std::string& root) {
  const auto vis = PngStems(root, "Visible");
  const auto ir = PngStems(root, "Infrared");
  std::vector<std::string> ids;
  for (const auto& id : vis) {
    if (ir.count(id)) ids.push_back(id);
  }
  return ids;
}

Sample LoadSample(const std::string& root, const std::string& id, int num_classes,
                  int ignore_index, const Palette& palette) {
  Sample s;
  s.pair = LoadPair(DatasetLayout::VisiblePath(root, id), DatasetLayout::InfraredPath(root, id));
  s.pair.id = id;
  s.label = LoadLabel(DatasetLayout::LabelPath(root, id), num_classes, ignore_index, palette);
  FSEG_CHECK(s.label.height == s.pair.visible.height && s.label.width == s.pair.visible.width,
             ErrorKind::kShapeMismatch, id + ": label size differs from images");
  return s;
}

}  // namespace fseg
