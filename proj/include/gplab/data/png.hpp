/*
 * Copyright 2026 The gplab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// 8-bit RGB PNG reading and writing on top of libpng's simplified API.

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gplab/error.hpp"
#include "gplab/tensor.hpp"

namespace gplab {

/// Interleaved 8-bit RGB pixels, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

inline RgbImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    const std::string why = img.message;
    png_image_free(&img);
    throw DataError("cannot decode image " + path.string() + ": " + why);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string why = img.message;
    png_image_free(&img);
    throw DataError("cannot decode image " + path.string() + ": " + why);
  }
  return out;
}

inline void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.pixels.size() != image.width * image.height * 3) {
    throw DataError("write_png: pixel buffer does not match " + std::to_string(image.width) +
                    "x" + std::to_string(image.height) + " RGB");
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    const std::string why = img.message;
    png_image_free(&img);
    throw DataError("cannot write image " + path.string() + ": " + why);
  }
}

/// Planar [3,H,W] tensor with values in [0,255]; no rescaling.
template <class T = float>
Tensor<T> to_tensor(const RgbImage& image) {
  const std::size_t h = image.height, w = image.width;
  Tensor<T> t(Shape{3, h, w});
  auto v = t.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        v[(c * h + y) * w + x] = static_cast<T>(image.pixels[(y * w + x) * 3 + c]);
  return t;
}

/// Inverse of to_tensor; values are rounded and clamped to [0,255].
template <class T>
RgbImage to_rgb(const Tensor<T>& t) {
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw ShapeError("to_rgb expects [3,H,W], got " + shape_str(t.shape()));
  }
  RgbImage img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.pixels.resize(img.width * img.height * 3);
  auto v = t.data();
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double p = std::round(static_cast<double>(v[(c * img.height + y) * img.width + x]));
        p = p < 0 ? 0 : (p > 255 ? 255 : p);
        img.pixels[(y * img.width + x) * 3 + c] = static_cast<std::uint8_t>(p);
      }
  return img;
}

} // namespace gplab
