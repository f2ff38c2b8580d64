// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

// Data-parallel inner loops. Every kernel exists twice: a plain serial
// reference in `serial` and an OpenMP version in `parallel`. Both evaluate
// each output element with the same arithmetic in the same order, so their
// results are bitwise identical for any thread count; the test suite checks
// this and bench/ compares their speed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pclip/geometry.hpp"

namespace pclip::kernels {

/// Integer pixel window [x0, x1) x [y0, y1) with an interior margin used by
/// the window scorer.
struct Window {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int margin = 1;
};

/// Summed-area table with one row/column of zero padding:
/// table[(y) * (w + 1) + x] = sum of values over [0, x) x [0, y).
struct IntegralImage {
  int width = 0;
  int height = 0;
  std::vector<double> table;

  double sum(int x0, int y0, int x1, int y1) const noexcept {
    const std::size_t stride = static_cast<std::size_t>(width) + 1;
    return table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0] +
           table[y0 * stride + x0];
  }
};

IntegralImage integral_image(std::span<const float> values, int width, int height);

/// Sets the OpenMP thread count for the lifetime of the scope (no-op without
/// OpenMP). `threads <= 0` leaves the current setting alone.
class ThreadScope {
 public:
  explicit ThreadScope(int threads);
  ~ThreadScope();
  ThreadScope(const ThreadScope&) = delete;
  ThreadScope& operator=(const ThreadScope&) = delete;

 private:
  int previous_ = 0;
};

bool openmp_enabled() noexcept;
int max_threads() noexcept;

// Kernel contracts (identical in both namespaces):
//
// sobel_magnitude  3x3 Sobel gradient magnitude, borders replicate edge pixels.
// window_scores    (edge mass in the margin-shrunk interior - edge mass in the
//                  margin band) / perimeter, floored at zero.
// cosine_matrix    out[i * n_cols + j] = cos(rows[i], cols[j]); rows and cols
//                  are packed `dim`-float vectors with nonzero norm.
// pairwise_edges   symmetric n x n 0/1 adjacency, edge iff IoU >= thr_iou and
//                  cosine >= thr_sim; the diagonal is zero.
// dense_forward    out[b, o] = bias[o] + sum_i weight[o, i] * in[b, i].
// dense_backward   gradients of dense_forward for grad_out (batch x out_dim);
//                  grad_in may be empty when not needed.

namespace serial {
void sobel_magnitude(std::span<const float> gray, int width, int height, std::span<float> out);
void window_scores(const IntegralImage& edges, std::span<const Window> windows,
                   std::span<double> out);
void cosine_matrix(std::span<const float> rows, std::span<const float> cols, std::size_t dim,
                   std::span<double> out);
void pairwise_edges(std::span<const BBox> boxes, std::span<const float> features, std::size_t dim,
                    double thr_iou, double thr_sim, std::span<std::uint8_t> adjacency);
void dense_forward(std::span<const double> in, std::size_t batch, std::size_t in_dim,
                   std::span<const double> weight, std::span<const double> bias,
                   std::size_t out_dim, std::span<double> out);
void dense_backward(std::span<const double> in, std::size_t batch, std::size_t in_dim,
                    std::span<const double> weight, std::size_t out_dim,
                    std::span<const double> grad_out, std::span<double> grad_weight,
                    std::span<double> grad_bias, std::span<double> grad_in);
}  // namespace serial

namespace parallel {
void sobel_magnitude(std::span<const float> gray, int width, int height, std::span<float> out);
void window_scores(const IntegralImage& edges, std::span<const Window> windows,
                   std::span<double> out);
void cosine_matrix(std::span<const float> rows, std::span<const float> cols, std::size_t dim,
                   std::span<double> out);
void pairwise_edges(std::span<const BBox> boxes, std::span<const float> features, std::size_t dim,
                    double thr_iou, double thr_sim, std::span<std::uint8_t> adjacency);
void dense_forward(std::span<const double> in, std::size_t batch, std::size_t in_dim,
                   std::span<const double> weight, std::span<const double> bias,
                   std::size_t out_dim, std::span<double> out);
void dense_backward(std::span<const double> in, std::size_t batch, std::size_t in_dim,
                    std::span<const double> weight, std::size_t out_dim,
                    std::span<const double> grad_out, std::span<double> grad_weight,
                    std::span<double> grad_bias, std::span<double> grad_in);
}  // namespace parallel

}  // namespace pclip::kernels
