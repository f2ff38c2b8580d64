// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

// Per-element bodies shared by the serial and OpenMP kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "pclip/kernels.hpp"

namespace pclip::kernels::detail {

inline float sobel_at(std::span<const float> g, int w, int h, int x, int y) noexcept {
  const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
  const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
  auto px = [&](int xx, int yy) { return g[static_cast<std::size_t>(yy) * w + xx]; };
  const float gx = (px(xp, ym) + 2.0f * px(xp, y) + px(xp, yp)) -
                   (px(xm, ym) + 2.0f * px(xm, y) + px(xm, yp));
  const float gy = (px(xm, yp) + 2.0f * px(x, yp) + px(xp, yp)) -
                   (px(xm, ym) + 2.0f * px(x, ym) + px(xp, ym));
  return std::sqrt(gx * gx + gy * gy);
}

inline double window_score(const IntegralImage& e, const Window& win) noexcept {
  const double total = e.sum(win.x0, win.y0, win.x1, win.y1);
  const int m = win.margin;
  double inner = 0.0;
  if (win.x1 - win.x0 > 2 * m && win.y1 - win.y0 > 2 * m) {
    inner = e.sum(win.x0 + m, win.y0 + m, win.x1 - m, win.y1 - m);
  }
  const double band = total - inner;
  const double perimeter = 2.0 * ((win.x1 - win.x0) + (win.y1 - win.y0));
  return std::max(0.0, (inner - band) / perimeter);
}

inline double dot(const float* a, const float* b, std::size_t dim) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < dim; ++k) s += double(a[k]) * double(b[k]);
  return s;
}

inline double norm(const float* a, std::size_t dim) noexcept { return std::sqrt(dot(a, a, dim)); }

inline double dense_at(std::span<const double> in, std::size_t b, std::size_t in_dim,
                       std::span<const double> weight, std::span<const double> bias,
                       std::size_t o) noexcept {
  const double* x = in.data() + b * in_dim;
  const double* wrow = weight.data() + o * in_dim;
  double s = bias[o];
  for (std::size_t i = 0; i < in_dim; ++i) s += wrow[i] * x[i];
  return s;
}

}  // namespace pclip::kernels::detail
