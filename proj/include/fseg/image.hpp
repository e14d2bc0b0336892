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

#include <cstdint>
#include <string>
#include <vector>

namespace fseg {

enum class ColorSpace { kGray, kRgb, kYCbCr };

// Interleaved height x width x channels raster with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  ColorSpace color_space = ColorSpace::kGray;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c, ColorSpace cs, float fill = 0.0f)
      : height(h), width(w), channels(c), color_space(cs),
        pixels(static_cast<size_t>(h) * w * c, fill) {}

  float& at(int y, int x, int c = 0) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return pixels.size(); }
};

// Throws ShapeMismatch / Numerical when the raster breaks the Image
// invariants (finite, in [0,1], at least 8x8).
void ValidateImage(const Image& img);

// 8-bit raster as stored on disk.
struct Raster8 {
  int height = 0;
  int width = 0;
  int channels = 1;  // 1 or 3
  std::vector<uint8_t> bytes;
};

// Reads an 8-bit PNG as gray or RGB (alpha composited away, palettes
// expanded). Throws DecodeError.
Raster8 ReadPng(const std::string& path);
void WritePng(const std::string& path, const Raster8& raster);

Image ToImage(const Raster8& raster);
// Rounds to nearest after clamping to [0, 1].
Raster8 ToRaster(const Image& img);

// Full-range BT.601. Input must be 3-channel.
Image RgbToYCbCr(const Image& rgb);
Image YCbCrToRgb(const Image& ycbcr);

// Single-channel view: luma for RGB, Y for YCbCr, channel mean otherwise.
Image ToGray(const Image& img);
Image ChannelMean(const Image& img);

// Replaces Y of the visible image's YCbCr with `luma` and returns RGB.
Image RecombineChroma(const Image& luma, const Image& visible_rgb);

}  // namespace fseg
