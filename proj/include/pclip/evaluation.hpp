// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pclip/geometry.hpp"

namespace pclip {

struct GroundTruthBox {
  BBox box;
  std::string category;
};

struct GroundTruth {
  /// Every annotated image, including images without objects.
  std::map<std::string, std::vector<GroundTruthBox>> images;
  /// Category names in declaration order (COCO) or first appearance (JSONL).
  std::vector<std::string> categories;

  std::size_t box_count() const noexcept;
};

enum class GroundTruthFormat { kAuto, kCoco, kJsonLines };

/// COCO-style JSON (images, annotations, categories) or JSON lines of
/// {"image_id", "x0", "y0", "x1", "y1", "category"}; a line with only
/// "image_id" declares an image without objects. kAuto picks JSON lines for
/// ".jsonl" files. COCO image ids are the file_name stem when present, else
/// the numeric id. Boxes are clamped to the declared image size. Schema
/// violations throw FormatError with the JSON path (COCO) or line (JSONL).
GroundTruth load_ground_truth(const std::filesystem::path& path,
                              GroundTruthFormat format = GroundTruthFormat::kAuto);
GroundTruth parse_coco_ground_truth(const nlohmann::json& doc);
GroundTruth parse_jsonl_ground_truth(std::string_view text);

/// Proposals per image, best first.
using RankedProposals = std::map<std::string, std::vector<BBox>>;

inline constexpr std::array<std::size_t, 5> kDefaultBudgets = {1, 10, 30, 50, 100};

/// {0.5, 0.55, ..., 0.95}
std::array<double, 10> average_recall_thresholds();

/// Fraction of ground-truth boxes with IoU > iou_threshold against at least
/// one of the first `budget` proposals of their image. Images missing from
/// `proposals` contribute misses. Throws InvalidInput when the ground truth
/// holds no boxes.
double recall_at(const RankedProposals& proposals, const GroundTruth& gt, double iou_threshold,
                 std::size_t budget);

/// Mean of recall_at over average_recall_thresholds().
double average_recall(const RankedProposals& proposals, const GroundTruth& gt,
                      std::size_t budget);

// ---------------------------------------------------------------------------
// Detection AP

struct LabeledDetection {
  BBox box;
  double score = 0.0;
  std::string category;
};

using DetectionsByImage = std::map<std::string, std::vector<LabeledDetection>>;

struct ClassAp {
  std::string category;
  double ap = 0.0;
  std::size_t ground_truth = 0;
  std::size_t detections = 0;  // after NMS
  bool in_vocabulary = true;
};

struct ApReport {
  std::vector<ClassAp> per_class;  // classes present in the ground truth, sorted by name
  double mean_ap = 0.0;
};

/// Per-class NMS at `nms_threshold` inside every image, then per class:
/// detections sorted by descending score (ties by image id, then position),
/// each matched to the unmatched ground-truth box of its image and class with
/// the highest IoU above `match_threshold`; AP is the area under the
/// all-point interpolated precision/recall curve. Classes in the ground truth
/// but not in `vocabulary` score 0 and are flagged. Throws InvalidInput when
/// the ground truth holds no boxes.
ApReport detect_and_ap(const DetectionsByImage& detections, const GroundTruth& gt,
                       const std::vector<std::string>& vocabulary, double nms_threshold = 0.5,
                       double match_threshold = 0.5);

/// All-point interpolated AP from a ranked list of true/false positives.
double average_precision(const std::vector<bool>& ranked_true_positive,
                         std::size_t ground_truth_count);

// ---------------------------------------------------------------------------

struct MetricReport {
  std::vector<std::size_t> budgets;
  std::vector<double> recall50;
  std::vector<double> average_recall;
  std::size_t images = 0;
  std::size_t ground_truth = 0;
  std::optional<ApReport> ap;
};

MetricReport evaluate_proposals(const RankedProposals& proposals, const GroundTruth& gt,
                                std::span<const std::size_t> budgets = kDefaultBudgets);

nlohmann::ordered_json to_json(const MetricReport& report);

/// Aligned text table with one column per budget, followed by per-class AP
/// rows when present.
std::string format_table(const MetricReport& report);

}  // namespace pclip
