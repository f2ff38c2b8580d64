// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include "detail.hpp"

namespace pclip::kernels::serial {

void sobel_magnitude(std::span<const float> gray, int width, int height, std::span<float> out) {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out[static_cast<std::size_t>(y) * width + x] = detail::sobel_at(gray, width, height, x, y);
}

void window_scores(const IntegralImage& edges, std::span<const Window> windows,
                   std::span<double> out) {
  for (std::size_t i = 0; i < windows.size(); ++i) out[i] = detail::window_score(edges, windows[i]);
}

void cosine_matrix(std::span<const float> rows, std::span<const float> cols, std::size_t dim,
                   std::span<double> out) {
  const std::size_t n_rows = rows.size() / dim, n_cols = cols.size() / dim;
  std::vector<double> col_norm(n_cols);
  for (std::size_t j = 0; j < n_cols; ++j) col_norm[j] = detail::norm(&cols[j * dim], dim);
  for (std::size_t i = 0; i < n_rows; ++i) {
    const double rn = detail::norm(&rows[i * dim], dim);
    for (std::size_t j = 0; j < n_cols; ++j) {
      out[i * n_cols + j] = detail::dot(&rows[i * dim], &cols[j * dim], dim) / (rn * col_norm[j]);
    }
  }
}

void pairwise_edges(std::span<const BBox> boxes, std::span<const float> features, std::size_t dim,
                    double thr_iou, double thr_sim, std::span<std::uint8_t> adjacency) {
  const std::size_t n = boxes.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = detail::norm(&features[i * dim], dim);
  for (std::size_t i = 0; i < n; ++i) {
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
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out_dim; ++o)
      out[b * out_dim + o] = detail::dense_at(in, b, in_dim, weight, bias, o);
}

void dense_backward(std::span<const double> in, std::size_t batch, std::size_t in_dim,
                    std::span<const double> weight, std::size_t out_dim,
                    std::span<const double> grad_out, std::span<double> grad_weight,
                    std::span<double> grad_bias, std::span<double> grad_in) {
  for (std::size_t o = 0; o < out_dim; ++o) {
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
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < in_dim; ++i) grad_in[b * in_dim + i] = 0.0;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double g = grad_out[b * out_dim + o];
      for (std::size_t i = 0; i < in_dim; ++i) grad_in[b * in_dim + i] += g * weight[o * in_dim + i];
    }
  }
}

}  // namespace pclip::kernels::serial
