// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pclip {

/// Axis-aligned box in continuous pixel coordinates. Area is
/// (x_max - x_min) * (y_max - y_min); there is no +1 pixel convention.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }

  bool contains(const BBox& other) const noexcept {
    return x_min <= other.x_min && y_min <= other.y_min && x_max >= other.x_max &&
           y_max >= other.y_max;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Box with every coordinate divided by the image width/height.
struct NormalizedBBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 1.0;
  double y_max = 1.0;

  friend bool operator==(const NormalizedBBox&, const NormalizedBBox&) = default;
};

struct Detection {
  BBox box;
  double score = 0.0;
};

/// True when all coordinates are finite, non-negative and the area is positive.
bool is_valid(const BBox& box) noexcept;

/// Throws InvalidInput naming `what` when `box` is not valid.
void validate(const BBox& box, const std::string& what = "box");

std::string to_string(const BBox& box);

/// Intersection over union of two valid boxes.
double iou(const BBox& a, const BBox& b);

/// Same as iou() without validation; both boxes must already be valid.
double iou_unchecked(const BBox& a, const BBox& b) noexcept;

/// Smallest box containing every input box.
BBox envelope(std::span<const BBox> boxes);

/// Clamps a box into [0, image_w] x [0, image_h]. Throws InvalidInput when
/// the clamped box has no area left.
BBox clamp_to_image(const BBox& box, double image_w, double image_h);

NormalizedBBox normalize(const BBox& box, double image_w, double image_h);
BBox denormalize(const NormalizedBBox& box, double image_w, double image_h);

/// Greedy non-maximum suppression. Returns the indices of kept entries in
/// output order (descending score; ties by smaller area, then input order).
/// A box is dropped when its IoU with an already kept box exceeds
/// `iou_threshold`.
std::vector<std::size_t> nms_indices(std::span<const BBox> boxes, std::span<const double> scores,
                                     double iou_threshold);

std::vector<Detection> nms(std::span<const Detection> proposals, double iou_threshold);

}  // namespace pclip
