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
#include "fseg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fseg/errors.hpp"

namespace fseg {

void ValidateImage(const Image& img) {
  FSEG_CHECK(img.height >= 8 && img.width >= 8, ErrorKind::kShapeMismatch,
             "image smaller than 8x8: " + std::to_string(img.height) + "x" +
                 std::to_string(img.width));
  FSEG_CHECK(img.pixels.size() ==
                 static_cast<size_t>(img.height) * img.width * img.channels,
             ErrorKind::kShapeMismatch, "pixel buffer size mismatch");
  for (float v : img.pixels) {
    FSEG_CHECK(std::isfinite(v) && v >= 0.0f && v <= 1.0f, ErrorKind::kNumerical,
               "pixel value outside [0,1]");
  }
}

Raster8 ReadPng(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorKind::kDecode, path + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster8 out;
  out.height = static_cast<int>(image.height);
  out.width = static_cast<int>(image.width);
  out.channels = color ? 3 : 1;
  out.bytes.resize(PNG_IMAGE_SIZE(image));
  // Background for alpha compositing: black.
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&image, &background, out.bytes.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::kDecode, path + ": " + msg);
  }
  return out;
}

void WritePng(const std::string& path, const Raster8& raster) {
  FSEG_CHECK(raster.channels == 1 || raster.channels == 3, ErrorKind::kShapeMismatch,
             "PNG output must be gray or RGB");
  FSEG_CHECK(raster.bytes.size() ==
                 static_cast<size_t>(raster.height) * raster.width * raster.channels,
             ErrorKind::kShapeMismatch, "raster size mismatch");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = raster.width;
  image.height = raster.height;
  image.format = raster.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, raster.bytes.data(), 0,
                               nullptr)) {
    throw Error(ErrorKind::kIo, path + ": " + image.message);
  }
}

Image ToImage(const Raster8& raster) {
  Image img(raster.height, raster.width, raster.channels,
            raster.channels == 3 ? ColorSpace::kRgb : ColorSpace::kGray);
  for (size_t i = 0; i < raster.bytes.size(); ++i) {
    img.pixels[i] = static_cast<float>(raster.bytes[i]) / 255.0f;
  }
  return img;
}

Raster8 ToRaster(const Image& img) {
  Raster8 out;
  out.height = img.height;
  out.width = img.width;
  out.channels = img.channels;
  out.bytes.resize(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    out.bytes[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Image RgbToYCbCr(const Image& rgb) {
  FSEG_CHECK(rgb.channels == 3, ErrorKind::kShapeMismatch,
             "RGB->YCbCr needs 3 channels, got " + std::to_string(rgb.channels));
  Image out(rgb.height, rgb.width, 3, ColorSpace::kYCbCr);
  const size_t n = static_cast<size_t>(rgb.height) * rgb.width;
  for (size_t i = 0; i < n; ++i) {
    const double r = rgb.pixels[3 * i], g = rgb.pixels[3 * i + 1],
                 b = rgb.pixels[3 * i + 2];
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    const double cb = 0.5 - 0.168735892 * r - 0.331264108 * g + 0.5 * b;
    const double cr = 0.5 + 0.5 * r - 0.418687589 * g - 0.081312411 * b;
    out.pixels[3 * i] = static_cast<float>(std::clamp(y, 0.0, 1.0));
    out.pixels[3 * i + 1] = static_cast<float>(std::clamp(cb, 0.0, 1.0));
    out.pixels[3 * i + 2] = static_cast<float>(std::clamp(cr, 0.0, 1.0));
  }
  return out;
}

Image YCbCrToRgb(const Image& ycbcr) {
  FSEG_CHECK(ycbcr.channels == 3, ErrorKind::kShapeMismatch,
             "YCbCr->RGB needs 3 channels, got " + std::to_string(ycbcr.channels));
  Image out(ycbcr.height, ycbcr.width, 3, ColorSpace::kRgb);
  const size_t n = static_cast<size_t>(ycbcr.height) * ycbcr.width;
  for (size_t i = 0; i < n; ++i) {
    const double y = ycbcr.pixels[3 * i];
    const double cb = ycbcr.pixels[3 * i + 1] - 0.5;
    const double cr = ycbcr.pixels[3 * i + 2] - 0.5;
    const double r = y + 1.402 * cr;
    const double g = y - 0.344136286 * cb - 0.714136286 * cr;
    const double b = y + 1.772 * cb;
    out.pixels[3 * i] = static_cast<float>(std::clamp(r, 0.0, 1.0));
    out.pixels[3 * i + 1] = static_cast<float>(std::clamp(g, 0.0, 1.0));
    out.pixels[3 * i + 2] = static_cast<float>(std::clamp(b, 0.0, 1.0));
  }
  return out;
}

Image ChannelMean(const Image& img) {
  Image out(img.height, img.width, 1, ColorSpace::kGray);
  const size_t n = static_cast<size_t>(img.height) * img.width;
  for (size_t i = 0; i < n; ++i) {
    float s = 0.0f;
    for (int c = 0; c < img.channels; ++c) s += img.pixels[i * img.channels + c];
    out.pixels[i] = s / static_cast<float>(img.channels);
  }
  return out;
}

Image ToGray(const Image& img) {
  if (img.channels == 1) return img;
  if (img.color_space == ColorSpace::kRgb && img.channels == 3) {
    Image ycc = RgbToYCbCr(img);
    Image out(img.height, img.width, 1, ColorSpace::kGray);
    for (size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = ycc.pixels[3 * i];
    return out;
  }
  if (img.color_space == ColorSpace::kYCbCr) {
    Image out(img.height, img.width, 1, ColorSpace::kGray);
    for (size_t i = 0; i < out.pixels.size(); ++i) {
      out.pixels[i] = img.pixels[i * img.channels];
    }
    return out;
  }
  return ChannelMean(img);
}

Image RecombineChroma(const Image& luma, const Image& visible) {
  FSEG_CHECK(luma.channels == 1 && luma.height == visible.height &&
                 luma.width == visible.width,
             ErrorKind::kShapeMismatch, "chroma recombination needs aligned gray luma");
  if (visible.channels == 1) {
    Image out = luma;
    out.color_space = ColorSpace::kGray;
    return out;
  }
  Image ycc = RgbToYCbCr(visible);
  for (size_t i = 0; i < luma.pixels.size(); ++i) {
    ycc.pixels[3 * i] = std::clamp(luma.pixels[i], 0.0f, 1.0f);
  }
  return YCbCrToRgb(ycc);
}

}  // namespace fseg
