// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force metric references over integer boxes. Overlaps are compared as
// exact integer ratios, never through a floating IoU.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pclip/evaluation.hpp"
#include "support.hpp"

namespace pclip::test {

struct Overlap {
  std::int64_t inter = 0;
  std::int64_t uni = 0;
};

inline Overlap cell_overlap(const BBox& a, const BBox& b) {
  std::int64_t inter = 0, area_a = 0, area_b = 0;
  const long lo_x = long(std::min(a.x_min, b.x_min)), hi_x = long(std::max(a.x_max, b.x_max));
  const long lo_y = long(std::min(a.y_min, b.y_min)), hi_y = long(std::max(a.y_max, b.y_max));
  for (long y = lo_y; y < hi_y; ++y) {
    for (long x = lo_x; x < hi_x; ++x) {
      const bool in_a = x >= a.x_min && x < a.x_max && y >= a.y_min && y < a.y_max;
      const bool in_b = x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
      area_a += in_a;
      area_b += in_b;
      inter += in_a && in_b;
    }
  }
  return {inter, area_a + area_b - inter};
}

/// IoU > num / den, exactly.
inline bool overlap_above(const BBox& a, const BBox& b, std::int64_t num, std::int64_t den) {
  const auto o = cell_overlap(a, b);
  return o.inter * den > num * o.uni;
}

inline double recall_oracle(const RankedProposals& props, const GroundTruth& gt, std::int64_t num,
                            std::int64_t den, std::size_t budget) {
  std::size_t hit = 0, total = 0;
  for (const auto& [id, boxes] : gt.images) {
    const auto it = props.find(id);
    for (const auto& g : boxes) {
      ++total;
      if (it == props.end()) continue;
      for (std::size_t p = 0; p < std::min(budget, it->second.size()); ++p) {
        if (overlap_above(it->second[p], g.box, num, den)) {
          ++hit;
          break;
        }
      }
    }
  }
  return double(hit) / double(total);
}

inline double average_recall_oracle(const RankedProposals& props, const GroundTruth& gt,
                                    std::size_t budget) {
  double sum = 0.0;
  for (int t = 50; t <= 95; t += 5) sum += recall_oracle(props, gt, t, 100, budget);
  return sum / 10.0;
}

/// Greedy NMS: best score first, equal scores prefer the smaller box and then
/// the earlier input; a box is dropped when it overlaps a kept one above
/// thr_num / thr_den.
inline std::vector<std::size_t> nms_oracle(const std::vector<LabeledDetection>& dets,
                                           const std::vector<std::size_t>& members,
                                           std::int64_t thr_num, std::int64_t thr_den) {
  auto order = members;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].box.area() < dets[b].box.area();
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept) suppressed = suppressed || overlap_above(dets[k].box, dets[i].box,
                                                                        thr_num, thr_den);
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

/// AP@0.5 per ground-truth class; classes outside `vocabulary` score 0.
inline std::map<std::string, double> ap_oracle(const DetectionsByImage& detections,
                                               const GroundTruth& gt,
                                               const std::vector<std::string>& vocabulary) {
  struct Hit {
    double score;
    std::string image;
    std::size_t position;
    BBox box;
  };
  std::map<std::string, std::size_t> count;
  for (const auto& [id, boxes] : gt.images)
    for (const auto& b : boxes) ++count[b.category];

  std::map<std::string, double> out;
  for (const auto& [category, n_gt] : count) {
    if (std::find(vocabulary.begin(), vocabulary.end(), category) == vocabulary.end()) {
      out[category] = 0.0;
      continue;
    }
    std::vector<Hit> ranked;
    for (const auto& [id, dets] : detections) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < dets.size(); ++i)
        if (dets[i].category == category) members.push_back(i);
      for (std::size_t i : nms_oracle(dets, members, 1, 2))
        ranked.push_back({dets[i].score, id, i, dets[i].box});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Hit& a, const Hit& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image != b.image) return a.image < b.image;
      return a.position < b.position;
    });
    std::map<std::string, std::vector<bool>> used;
    std::vector<bool> tp;
    for (const auto& d : ranked) {
      bool hit = false;
      const auto it = gt.images.find(d.image);
      if (it != gt.images.end()) {
        auto& u = used[d.image];
        u.resize(it->second.size(), false);
        // Highest overlap wins; equal overlaps go to the earlier box.
        std::size_t best = it->second.size();
        Overlap best_o{1, 2};
        for (std::size_t k = 0; k < it->second.size(); ++k) {
          if (u[k] || it->second[k].category != category) continue;
          const auto o = cell_overlap(d.box, it->second[k].box);
          if (o.inter * best_o.uni > best_o.inter * o.uni) {
            best_o = o;
            best = k;
          }
        }
        if (best < it->second.size()) {
          u[best] = true;
          hit = true;
        }
      }
      tp.push_back(hit);
    }
    // Each true positive contributes 1/n_gt recall at the best precision
    // reachable from its rank onward.
    double ap = 0.0;
    for (std::size_t k = 0; k < tp.size(); ++k) {
      if (!tp[k]) continue;
      double best_precision = 0.0;
      std::size_t hits = 0;
      for (std::size_t j = 0; j < tp.size(); ++j) {
        hits += tp[j];
        if (j >= k) best_precision = std::max(best_precision, double(hits) / double(j + 1));
      }
      ap += best_precision / double(n_gt);
    }
    out[category] = ap;
  }
  return out;
}

/// A random toy instance: up to `max_images` images with up to `max_boxes`
/// ground-truth boxes and ranked proposals each, over a 3-class vocabulary.
struct ToyInstance {
  GroundTruth gt;
  RankedProposals proposals;
  DetectionsByImage detections;
};

inline ToyInstance toy_instance(Gen& g, int max_images, int max_boxes) {
  static const std::vector<std::string> kClasses{"cat", "dog", "owl"};
  ToyInstance t;
  const int images = int(g.integer(1, max_images));
  for (int i = 0; i < images; ++i) {
    const std::string id = "im" + std::to_string(i);
    auto& gt_boxes = t.gt.images[id];
    const int n_gt = int(g.integer(i == 0 ? 1 : 0, max_boxes));
    for (int k = 0; k < n_gt; ++k) {
      gt_boxes.push_back({g.int_box(24, 24), kClasses[g.index(kClasses.size())]});
    }
    if (g.coin(0.9)) {
      auto& props = t.proposals[id];
      auto& dets = t.detections[id];
      const int n_p = int(g.integer(0, max_boxes));
      for (int k = 0; k < n_p; ++k) {
        // Half the proposals perturb a ground-truth box so hits are common.
        BBox b = g.int_box(24, 24);
        if (!gt_boxes.empty() && g.coin()) {
          b = gt_boxes[g.index(gt_boxes.size())].box;
          b.x_min = std::max(0.0, b.x_min - double(g.integer(0, 2)));
          b.y_max = std::min(24.0, b.y_max + double(g.integer(0, 2)));
        }
        props.push_back(b);
        dets.push_back({b, 0.25 * double(g.integer(0, 4)), kClasses[g.index(kClasses.size())]});
      }
    }
  }
  t.gt.categories = kClasses;
  return t;
}

}  // namespace pclip::test
