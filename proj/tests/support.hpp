// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

// Shared generators and reference implementations for the test suites.
// Oracles here are written directly from definitions and never call into the
// library code they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <unistd.h>
#include <sstream>
#include <string>
#include <vector>

#include "pclip/geometry.hpp"

namespace pclip::test {

/// Seeded value generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }
  /// Inclusive on both ends.
  long integer(long lo, long hi) {
    return lo + static_cast<long>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(integer(0, long(n) - 1)); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
  double normal() {
    double u1 = uniform(0.0, 1.0);
    while (u1 <= 0.0) u1 = uniform(0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform(0.0, 1.0));
  }

  /// Box with integer corners inside [0, w] x [0, h].
  BBox int_box(long w, long h) {
    const long x0 = integer(0, w - 1), x1 = integer(x0 + 1, w);
    const long y0 = integer(0, h - 1), y1 = integer(y0 + 1, h);
    return {double(x0), double(y0), double(x1), double(y1)};
  }
  BBox box(double w, double h, double min_side = 1.0) {
    const double bw = uniform(min_side, w), bh = uniform(min_side, h);
    const double x = uniform(0.0, w - bw), y = uniform(0.0, h - bh);
    return {x, y, x + bw, y + bh};
  }
  std::vector<double> probabilities(std::size_t n) {
    std::vector<double> p(n);
    double sum = 0.0;
    for (auto& v : p) sum += (v = uniform(1e-6, 1.0));
    for (auto& v : p) v /= sum;
    return p;
  }
  std::vector<float> floats(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(uniform(lo, hi));
    return v;
  }

 private:
  std::mt19937_64 rng_;
};

/// IoU by counting unit cells of an integer grid.
inline double pixel_iou(const BBox& a, const BBox& b) {
  const long x_lo = long(std::min(a.x_min, b.x_min)), x_hi = long(std::max(a.x_max, b.x_max));
  const long y_lo = long(std::min(a.y_min, b.y_min)), y_hi = long(std::max(a.y_max, b.y_max));
  long inter = 0, uni = 0;
  for (long y = y_lo; y < y_hi; ++y) {
    for (long x = x_lo; x < x_hi; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      const bool in_a = cx > a.x_min && cx < a.x_max && cy > a.y_min && cy < a.y_max;
      const bool in_b = cx > b.x_min && cx < b.x_max && cy > b.y_min && cy < b.y_max;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

/// Shannon entropy in nats with 0 ln 0 = 0.
inline double entropy_oracle(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  static std::uint64_t counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("pclip_test_" + name + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace pclip::test
