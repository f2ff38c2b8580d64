// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "pclip/error.hpp"

#ifdef PCLIP_WITH_OPENCV
#include <opencv2/imgcodecs.hpp>
#endif

namespace pclip {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw InvalidInput("negative image dimensions");
  data_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill[0];
    data_[i + 1] = fill[1];
    data_[i + 2] = fill[2];
  }
}

void Image::fill_rect(int x0, int y0, int x1, int y1, Rgb c) noexcept {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, width_);
  y1 = std::min(y1, height_);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) set(x, y, c);
}

std::vector<float> Image::to_gray() const {
  std::vector<float> out(static_cast<std::size_t>(width_) * height_);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto* p = &data_[i * 3];
    out[i] = (0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2]) / 255.0f;
  }
  return out;
}

PixelRect pixel_rect(const BBox& box, int image_w, int image_h, int min_side) {
  if (image_w <= 0 || image_h <= 0) throw InvalidInput("empty image");
  if (!std::isfinite(box.x_min) || !std::isfinite(box.y_min) || !std::isfinite(box.x_max) ||
      !std::isfinite(box.y_max)) {
    throw InvalidInput("non-finite box " + to_string(box));
  }
  PixelRect r;
  r.x0 = static_cast<int>(std::clamp(std::floor(box.x_min), 0.0, double(image_w)));
  r.y0 = static_cast<int>(std::clamp(std::floor(box.y_min), 0.0, double(image_h)));
  r.x1 = static_cast<int>(std::clamp(std::ceil(box.x_max), 0.0, double(image_w)));
  r.y1 = static_cast<int>(std::clamp(std::ceil(box.y_max), 0.0, double(image_h)));
  if (r.width() < min_side || r.height() < min_side) {
    throw InvalidInput("degenerate crop " + to_string(box) + ": sides shorter than " +
                       std::to_string(min_side) + " px after clamping");
  }
  return r;
}

std::vector<float> crop_resize_bilinear(const Image& image, const BBox& box, int size) {
  if (size <= 0) throw InvalidInput("resize target must be positive");
  const PixelRect r = pixel_rect(box, image.width(), image.height());
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  std::vector<float> out(plane * 3);
  const double sx = double(r.width()) / size;
  const double sy = double(r.height()) / size;
  for (int v = 0; v < size; ++v) {
    const double fy = std::clamp(r.y0 + (v + 0.5) * sy - 0.5, double(r.y0), double(r.y1 - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, r.y1 - 1);
    const double wy = fy - y0;
    for (int u = 0; u < size; ++u) {
      const double fx = std::clamp(r.x0 + (u + 0.5) * sx - 0.5, double(r.x0), double(r.x1 - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, r.x1 - 1);
      const double wx = fx - x0;
      const Rgb a = image.at(x0, y0), b = image.at(x1, y0), c = image.at(x0, y1),
                d = image.at(x1, y1);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = a[ch] * (1 - wx) + b[ch] * wx;
        const double bottom = c[ch] * (1 - wx) + d[ch] * wx;
        out[ch * plane + static_cast<std::size_t>(v) * size + u] =
            static_cast<float>((top * (1 - wy) + bottom * wy) / 255.0);
      }
    }
  }
  return out;
}

namespace {

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string pnm_token(const std::string& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  return buf.substr(start, pos - start);
}

Image load_pnm(const std::string& buf, const std::string& name) {
  std::size_t pos = 0;
  const std::string magic = pnm_token(buf, pos);
  const bool rgb = magic == "P6";
  if (!rgb && magic != "P5") throw FormatError(name + ": not a binary PGM/PPM file", "byte 0");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(buf, pos));
    h = std::stoi(pnm_token(buf, pos));
    maxval = std::stoi(pnm_token(buf, pos));
  } catch (const std::exception&) {
    throw FormatError(name + ": malformed PNM header", "byte " + std::to_string(pos));
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw FormatError(name + ": unsupported PNM geometry or maxval", "byte " + std::to_string(pos));
  }
  ++pos;  // single whitespace before raster
  const std::size_t channels = rgb ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (buf.size() < pos + need) {
    throw FormatError(name + ": truncated raster", "byte " + std::to_string(buf.size()));
  }
  Image img(w, h);
  auto& d = img.data();
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const auto raw = static_cast<unsigned char>(buf[pos + i * channels + (rgb ? c : 0)]);
      d[i * 3 + c] = static_cast<std::uint8_t>(raw * 255 / maxval);
    }
  }
  return img;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() >= 2 && buf[0] == 'P' && (buf[1] == '5' || buf[1] == '6')) {
    return load_pnm(buf, path.string());
  }
#ifdef PCLIP_WITH_OPENCV
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw FormatError("cannot decode image " + path.string());
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < bgr.cols; ++x) img.set(x, y, {row[3 * x + 2], row[3 * x + 1], row[3 * x]});
  }
  return img;
#else
  throw FormatError("unsupported image format for " + path.string() +
                    " (this build reads binary PGM/PPM only)");
#endif
}

void save_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data().data()),
            static_cast<std::streamsize>(image.data().size()));
}

}  // namespace pclip
