// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pclip/geometry.hpp"

namespace pclip {

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit RGB raster, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {0, 0, 0});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const noexcept {
    const auto* p = &data_[(static_cast<std::size_t>(y) * width_ + x) * 3];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    auto* p = &data_[(static_cast<std::size_t>(y) * width_ + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  /// Paints the integer pixel rectangle [x0, x1) x [y0, y1), clipped to the image.
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) noexcept;

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }
  std::vector<std::uint8_t>& data() noexcept { return data_; }

  /// Luma in [0, 1] (BT.601 weights), row-major.
  std::vector<float> to_gray() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Pixel bounds of a continuous box after clamping: [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
};

/// Rounds a box outward-in to whole pixels and clamps it to the image.
/// Throws InvalidInput when either side of the result is shorter than
/// `min_side` pixels.
PixelRect pixel_rect(const BBox& box, int image_w, int image_h, int min_side = 2);

/// Crops `box` and resamples it bilinearly to size x size (no aspect
/// preservation). Output is planar RGB float in [0, 1], channel-major.
std::vector<float> crop_resize_bilinear(const Image& image, const BBox& box, int size);

/// Reads binary PGM/PPM natively; other formats go through OpenCV when the
/// toolkit was built with it. Throws FormatError on failure.
Image load_image(const std::filesystem::path& path);

/// Writes binary PPM (P6).
void save_ppm(const Image& image, const std::filesystem::path& path);

}  // namespace pclip
