// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pclip::kernels {

IntegralImage integral_image(std::span<const float> values, int width, int height) {
  IntegralImage ii;
  ii.width = width;
  ii.height = height;
  const std::size_t stride = static_cast<std::size_t>(width) + 1;
  ii.table.assign(stride * (static_cast<std::size_t>(height) + 1), 0.0);
  for (int y = 0; y < height; ++y) {
    double row = 0.0;
    for (int x = 0; x < width; ++x) {
      row += values[static_cast<std::size_t>(y) * width + x];
      ii.table[(y + 1) * stride + x + 1] = ii.table[y * stride + x + 1] + row;
    }
  }
  return ii;
}

ThreadScope::ThreadScope(int threads) {
#ifdef _OPENMP
  previous_ = omp_get_max_threads();
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

ThreadScope::~ThreadScope() {
#ifdef _OPENMP
  if (previous_ > 0) omp_set_num_threads(previous_);
#endif
}

bool openmp_enabled() noexcept {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace pclip::kernels
