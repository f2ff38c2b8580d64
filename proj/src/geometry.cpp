// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pclip/error.hpp"

namespace pclip {

bool is_valid(const BBox& b) noexcept {
  const bool finite = std::isfinite(b.x_min) && std::isfinite(b.y_min) &&
                      std::isfinite(b.x_max) && std::isfinite(b.y_max);
  return finite && b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_min < b.x_max && b.y_min < b.y_max;
}

void validate(const BBox& box, const std::string& what) {
  if (!is_valid(box)) {
    throw InvalidInput("invalid " + what + " " + to_string(box) +
                       ": coordinates must be finite, non-negative, with positive area");
  }
}

std::string to_string(const BBox& b) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "(%g, %g, %g, %g)", b.x_min, b.y_min, b.x_max, b.y_max);
  return buf;
}

double iou_unchecked(const BBox& a, const BBox& b) noexcept {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double iou(const BBox& a, const BBox& b) {
  validate(a, "first box");
  validate(b, "second box");
  return iou_unchecked(a, b);
}

BBox envelope(std::span<const BBox> boxes) {
  if (boxes.empty()) throw InvalidInput("envelope of an empty box list");
  BBox out = boxes.front();
  for (const auto& b : boxes.subspan(1)) {
    out.x_min = std::min(out.x_min, b.x_min);
    out.y_min = std::min(out.y_min, b.y_min);
    out.x_max = std::max(out.x_max, b.x_max);
    out.y_max = std::max(out.y_max, b.y_max);
  }
  return out;
}

BBox clamp_to_image(const BBox& box, double image_w, double image_h) {
  if (!(image_w > 0.0) || !(image_h > 0.0)) {
    throw InvalidInput("image dimensions must be positive");
  }
  BBox out{std::clamp(box.x_min, 0.0, image_w), std::clamp(box.y_min, 0.0, image_h),
           std::clamp(box.x_max, 0.0, image_w), std::clamp(box.y_max, 0.0, image_h)};
  validate(out, "clamped box");
  return out;
}

NormalizedBBox normalize(const BBox& box, double image_w, double image_h) {
  const BBox c = clamp_to_image(box, image_w, image_h);
  return {c.x_min / image_w, c.y_min / image_h, c.x_max / image_w, c.y_max / image_h};
}

BBox denormalize(const NormalizedBBox& box, double image_w, double image_h) {
  if (!(image_w > 0.0) || !(image_h > 0.0)) {
    throw InvalidInput("image dimensions must be positive");
  }
  return {box.x_min * image_w, box.y_min * image_h, box.x_max * image_w, box.y_max * image_h};
}

std::vector<std::size_t> nms_indices(std::span<const BBox> boxes, std::span<const double> scores,
                                     double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw InvalidInput("NMS IoU threshold must lie in (0, 1)");
  }
  if (boxes.size() != scores.size()) {
    throw InvalidInput("NMS needs one score per box");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (scores[i] != scores[j]) return scores[i] > scores[j];
    return boxes[i].area() < boxes[j].area();
  });

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou_unchecked(boxes[idx], boxes[k]) > iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

std::vector<Detection> nms(std::span<const Detection> proposals, double iou_threshold) {
  std::vector<BBox> boxes;
  std::vector<double> scores;
  boxes.reserve(proposals.size());
  scores.reserve(proposals.size());
  for (const auto& p : proposals) {
    validate(p.box);
    boxes.push_back(p.box);
    scores.push_back(p.score);
  }
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(boxes, scores, iou_threshold)) out.push_back(proposals[i]);
  return out;
}

}  // namespace pclip
