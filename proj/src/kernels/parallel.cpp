// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include "detail.hpp"

namespace pclip::kernels::parallel {

void sobel_magnitude(std::span<const float> gray, int width, int height, std::span<float> out) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out[static_cast<std::size_t>(y) * width + x] = detail::sobel_at(gray, width, height, x, y);
}

void window_scores(const IntegralImage& edges, std::span<const Window> windows,
                   std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = detail::window_score(edges, windows[i]);
}

void cosine_matrix(std::span<const float> rows, std::span<const float> cols, std::size_t dim,
                   std::span<double> out) {
  const auto n_rows = static_cast<std::ptrdiff_t>(rows.size() / dim);
  const std::size_t n_cols = cols.size() / dim;
  std::vector<double> col_norm(n_cols);
  for (std::size_t j = 0; j < n_cols; ++j) col_norm[j] = detail::norm(&cols[j * dim], dim);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n_rows; ++i) {
    const double rn = detail::norm(&rows[i * dim], dim);
    for (std::size_t j = 0; j < n_cols; ++j) {
      out[i * n_cols + j] = detail::dot(&rows[i * dim], &cols[j * dim], dim) / (rn * col_norm[j]);
    }
  }
}

void pairwise_edges(std::span<const BBox> boxes, std::span<const float> features, std::size_t dim,
                    double thr_iou, double thr_sim, std::span<std::uint8_t> adjacency) {
  const std::size_t n = boxes.size();
  const auto sn = static_cast<std::ptrdiff_t>(n);
  std::vector<double> norms(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sn; ++i) norms[i] = detail::norm(&features[i * dim], dim);
  // Each row i writes (i, j) and its mirror (j, i) for j > i; the pairs are
  // disjoint across rows, so no synchronisation is needed.
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t si = 0; si < sn; ++si) {
    const auto i = static_cast<std::size_t>(si);
    adjacency[i * n + i] = 0;
    for (std::size_t j = i + 1; j < n; ++j) {
      bool edge = iou_unchecked(boxes[i], boxes[j]) >= thr_iou;
      if (edge) {
        const double sim =
            detail::dot(&features[i * dim], &features[j * dim], dim) / (norms[i] * norms[j]);
        edge = sim >= thr_sim;
      }
      adjacency[i * n + j] = adjacency[j * n + i] = edge ? 1 : 0;
    }
  }
}

void dense_forward(std::span<const double> in, std::size_t batch, std::size_t in_dim,
                   std::span<const double> weight, std::span<const double> bias,
                   std::size_t out_dim, std::span<double> out) {
  const auto total = static_cast<std::ptrdiff_t>(batch * out_dim);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < total; ++k) {
    const std::size_t b = k / out_dim, o = k % out_dim;
    out[k] = detail::dense_at(in, b, in_dim, weight, bias, o);
  }
}

void dense_backward(std::span<const double> in, std::size_t batch, std::size_t in_dim,
                    std::span<const double> weight, std::size_t out_dim,
                    std::span<const double> grad_out, std::span<double> grad_weight,
                    std::span<double> grad_bias, std::span<double> grad_in) {
  // Reductions over the batch run inside one thread per output unit, in the
  // same order as the serial kernel.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t so = 0; so < static_cast<std::ptrdiff_t>(out_dim); ++so) {
    const auto o = static_cast<std::size_t>(so);
    double gb = 0.0;
    for (std::size_t i = 0; i < in_dim; ++i) grad_weight[o * in_dim + i] = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double g = grad_out[b * out_dim + o];
      gb += g;
      for (std::size_t i = 0; i < in_dim; ++i) grad_weight[o * in_dim + i] += g * in[b * in_dim + i];
    }
    grad_bias[o] = gb;
  }
  if (grad_in.empty()) return;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sb = 0; sb < static_cast<std::ptrdiff_t>(batch); ++sb) {
    const auto b = static_cast<std::size_t>(sb);
    for (std::size_t i = 0; i < in_dim; ++i) grad_in[b * in_dim + i] = 0.0;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double g = grad_out[b * out_dim + o];
      for (std::size_t i = 0; i < in_dim; ++i) grad_in[b * in_dim + i] += g * weight[o * in_dim + i];
    }
  }
}

}  // namespace pclip::kernels::parallel
