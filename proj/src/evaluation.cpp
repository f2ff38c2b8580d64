// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "pclip/error.hpp"

namespace pclip {

std::size_t GroundTruth::box_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [id, boxes] : images) n += boxes.size();
  return n;
}

namespace {

double json_number(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw FormatError("expected a number", path);
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw FormatError("non-finite number", path);
  return v;
}

const nlohmann::json& json_array_field(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_array()) {
    throw FormatError(std::string("missing array \"") + key + "\"", std::string("$.") + key);
  }
  return doc[key];
}

std::string id_string(const nlohmann::json& id, const std::string& path) {
  if (id.is_number_integer()) return std::to_string(id.get<long long>());
  if (id.is_string()) return id.get<std::string>();
  throw FormatError("id must be an integer or string", path);
}

BBox checked_box(double x0, double y0, double x1, double y1, double image_w, double image_h,
                 const std::string& path) {
  const BBox box{x0, y0, x1, y1};
  if (!(x1 > x0) || !(y1 > y0)) throw FormatError("box has non-positive width or height", path);
  if (image_w > 0 && image_h > 0) {
    try {
      return clamp_to_image(box, image_w, image_h);
    } catch (const InvalidInput&) {
      throw FormatError("box lies outside its image", path);
    }
  }
  if (x0 < 0 || y0 < 0) throw FormatError("box has negative coordinates", path);
  return box;
}

}  // namespace

GroundTruth parse_coco_ground_truth(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("ground truth must be a JSON object", "$");
  GroundTruth gt;

  std::map<std::string, std::string> category_names;
  const auto& cats = json_array_field(doc, "categories");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string path = "$.categories[" + std::to_string(i) + "]";
    const auto& c = cats[i];
    if (!c.is_object() || !c.contains("id") || !c.contains("name") || !c["name"].is_string()) {
      throw FormatError("category needs \"id\" and \"name\"", path);
    }
    const auto id = id_string(c["id"], path + ".id");
    const auto name = c["name"].get<std::string>();
    if (!category_names.emplace(id, name).second) {
      throw FormatError("duplicate category id " + id, path + ".id");
    }
    gt.categories.push_back(name);
  }

  struct ImageInfo {
    std::string key;
    double width = 0;
    double height = 0;
  };
  std::map<std::string, ImageInfo> image_info;
  const auto& imgs = json_array_field(doc, "images");
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const std::string path = "$.images[" + std::to_string(i) + "]";
    const auto& im = imgs[i];
    if (!im.is_object() || !im.contains("id")) throw FormatError("image needs \"id\"", path);
    ImageInfo info;
    const auto id = id_string(im["id"], path + ".id");
    info.key = id;
    if (im.contains("file_name")) {
      if (!im["file_name"].is_string()) {
        throw FormatError("file_name must be a string", path + ".file_name");
      }
      info.key = std::filesystem::path(im["file_name"].get<std::string>()).stem().string();
    }
    if (im.contains("width")) info.width = json_number(im["width"], path + ".width");
    if (im.contains("height")) info.height = json_number(im["height"], path + ".height");
    if (!gt.images.emplace(info.key, std::vector<GroundTruthBox>{}).second) {
      throw FormatError("duplicate image " + info.key, path);
    }
    if (!image_info.emplace(id, info).second) throw FormatError("duplicate image id " + id, path);
  }

  const auto& anns = json_array_field(doc, "annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string path = "$.annotations[" + std::to_string(i) + "]";
    const auto& a = anns[i];
    if (!a.is_object() || !a.contains("image_id") || !a.contains("bbox") ||
        !a.contains("category_id")) {
      throw FormatError("annotation needs \"image_id\", \"bbox\" and \"category_id\"", path);
    }
    const auto image_it = image_info.find(id_string(a["image_id"], path + ".image_id"));
    if (image_it == image_info.end()) throw FormatError("unknown image", path + ".image_id");
    const auto cat_it = category_names.find(id_string(a["category_id"], path + ".category_id"));
    if (cat_it == category_names.end()) {
      throw FormatError("unknown category", path + ".category_id");
    }
    const auto& bb = a["bbox"];
    if (!bb.is_array() || bb.size() != 4) {
      throw FormatError("bbox must be [x, y, width, height]", path + ".bbox");
    }
    const double x = json_number(bb[0], path + ".bbox[0]");
    const double y = json_number(bb[1], path + ".bbox[1]");
    const double w = json_number(bb[2], path + ".bbox[2]");
    const double h = json_number(bb[3], path + ".bbox[3]");
    if (w <= 0) throw FormatError("bbox width must be positive", path + ".bbox[2]");
    if (h <= 0) throw FormatError("bbox height must be positive", path + ".bbox[3]");
    const auto& info = image_it->second;
    gt.images[info.key].push_back(
        {checked_box(x, y, x + w, y + h, info.width, info.height, path + ".bbox"),
         cat_it->second});
  }
  return gt;
}

GroundTruth parse_jsonl_ground_truth(std::string_view text) {
  GroundTruth gt;
  std::set<std::string> seen_categories;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("malformed JSON: ") + e.what(), where);
    }
    if (!j.is_object() || !j.contains("image_id") || !j["image_id"].is_string()) {
      throw FormatError("record needs a string \"image_id\"", where);
    }
    auto& boxes = gt.images[j["image_id"].get<std::string>()];
    const bool has_box = j.contains("x0") || j.contains("y0") || j.contains("x1") ||
                         j.contains("y1") || j.contains("category");
    if (!has_box) continue;
    for (const char* key : {"x0", "y0", "x1", "y1"}) {
      if (!j.contains(key)) throw FormatError(std::string("missing field \"") + key + "\"", where);
    }
    if (!j.contains("category") || !j["category"].is_string()) {
      throw FormatError("record needs a string \"category\"", where);
    }
    const auto category = j["category"].get<std::string>();
    boxes.push_back({checked_box(json_number(j["x0"], where + " x0"),
                                 json_number(j["y0"], where + " y0"),
                                 json_number(j["x1"], where + " x1"),
                                 json_number(j["y1"], where + " y1"), 0, 0, where),
                     category});
    if (seen_categories.insert(category).second) gt.categories.push_back(category);
  }
  return gt;
}

GroundTruth load_ground_truth(const std::filesystem::path& path, GroundTruthFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ground truth " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (format == GroundTruthFormat::kAuto) {
    format = path.extension() == ".jsonl" ? GroundTruthFormat::kJsonLines
                                          : GroundTruthFormat::kCoco;
  }
  try {
    if (format == GroundTruthFormat::kJsonLines) return parse_jsonl_ground_truth(buf.str());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("malformed JSON: ") + e.what(), "$");
    }
    return parse_coco_ground_truth(doc);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

std::array<double, 10> average_recall_thresholds() {
  std::array<double, 10> t{};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = double(50 + 5 * i) / 100.0;
  return t;
}

namespace {

/// For every ground-truth box, in map order, the best IoU reached by the
/// first `budget` proposals of its image (0 when there are none).
std::vector<double> best_overlaps(const RankedProposals& proposals, const GroundTruth& gt,
                                  std::size_t budget) {
  if (gt.box_count() == 0) throw InvalidInput("recall is undefined without ground-truth boxes");
  std::vector<const std::vector<GroundTruthBox>*> per_image;
  std::vector<const std::vector<BBox>*> ranked;
  std::vector<std::size_t> offset;
  std::size_t total = 0;
  for (const auto& [id, boxes] : gt.images) {
    per_image.push_back(&boxes);
    const auto it = proposals.find(id);
    ranked.push_back(it == proposals.end() ? nullptr : &it->second);
    offset.push_back(total);
    total += boxes.size();
  }
  std::vector<double> best(total, 0.0);
  const auto n_images = static_cast<std::ptrdiff_t>(per_image.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n_images; ++i) {
    if (!ranked[i]) continue;
    const auto& props = *ranked[i];
    const std::size_t k = std::min(budget, props.size());
    for (std::size_t g = 0; g < per_image[i]->size(); ++g) {
      double b = 0.0;
      for (std::size_t p = 0; p < k; ++p) b = std::max(b, iou(props[p], (*per_image[i])[g].box));
      best[offset[i] + g] = b;
    }
  }
  return best;
}

double recall_from(const std::vector<double>& best, double threshold) {
  std::size_t hit = 0;
  for (double b : best) hit += b > threshold ? 1 : 0;
  return double(hit) / double(best.size());
}

}  // namespace

double recall_at(const RankedProposals& proposals, const GroundTruth& gt, double iou_threshold,
                 std::size_t budget) {
  return recall_from(best_overlaps(proposals, gt, budget), iou_threshold);
}

double average_recall(const RankedProposals& proposals, const GroundTruth& gt,
                      std::size_t budget) {
  const auto best = best_overlaps(proposals, gt, budget);
  double sum = 0.0;
  for (double t : average_recall_thresholds()) sum += recall_from(best, t);
  return sum / 10.0;
}

// ---------------------------------------------------------------------------

double average_precision(const std::vector<bool>& ranked_true_positive,
                         std::size_t ground_truth_count) {
  if (ground_truth_count == 0) throw InvalidInput("AP is undefined without ground truth");
  const std::size_t n = ranked_true_positive.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_true_positive[i] ? 1 : 0;
    precision[i] = double(tp) / double(i + 1);
    recall[i] = double(tp) / double(ground_truth_count);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

ApReport detect_and_ap(const DetectionsByImage& detections, const GroundTruth& gt,
                       const std::vector<std::string>& vocabulary, double nms_threshold,
                       double match_threshold) {
  if (gt.box_count() == 0) throw InvalidInput("AP is undefined without ground-truth boxes");
  const std::set<std::string> vocab(vocabulary.begin(), vocabulary.end());

  struct Ranked {
    double score;
    const std::string* image;
    std::size_t position;
    BBox box;
  };
  std::map<std::string, std::vector<Ranked>> by_class;
  for (const auto& [image, dets] : detections) {
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < dets.size(); ++i) members[dets[i].category].push_back(i);
    for (const auto& [category, idx] : members) {
      std::vector<BBox> boxes;
      std::vector<double> scores;
      for (std::size_t i : idx) {
        boxes.push_back(dets[i].box);
        scores.push_back(dets[i].score);
      }
      for (std::size_t k : nms_indices(boxes, scores, nms_threshold)) {
        by_class[category].push_back({scores[k], &image, idx[k], boxes[k]});
      }
    }
  }

  std::map<std::string, std::size_t> gt_count;
  for (const auto& [image, boxes] : gt.images)
    for (const auto& b : boxes) ++gt_count[b.category];

  ApReport report;
  for (const auto& [category, count] : gt_count) {
    ClassAp c;
    c.category = category;
    c.ground_truth = count;
    c.in_vocabulary = vocab.count(category) > 0;
    auto& ranked = by_class[category];
    c.detections = ranked.size();
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.score != b.score) return a.score > b.score;
      if (*a.image != *b.image) return *a.image < *b.image;
      return a.position < b.position;
    });
    std::map<std::string, std::vector<bool>> matched;
    std::vector<bool> tp;
    tp.reserve(ranked.size());
    for (const auto& d : ranked) {
      const auto it = gt.images.find(*d.image);
      bool hit = false;
      if (it != gt.images.end()) {
        auto& used = matched[*d.image];
        used.resize(it->second.size(), false);
        double best = match_threshold;
        std::size_t best_k = it->second.size();
        for (std::size_t k = 0; k < it->second.size(); ++k) {
          if (used[k] || it->second[k].category != category) continue;
          const double o = iou(d.box, it->second[k].box);
          if (o > best) {
            best = o;
            best_k = k;
          }
        }
        if (best_k < it->second.size()) {
          used[best_k] = true;
          hit = true;
        }
      }
      tp.push_back(hit);
    }
    c.ap = c.in_vocabulary ? average_precision(tp, count) : 0.0;
    report.per_class.push_back(c);
  }
  double sum = 0.0;
  for (const auto& c : report.per_class) sum += c.ap;
  report.mean_ap = sum / double(report.per_class.size());
  return report;
}

// ---------------------------------------------------------------------------

MetricReport evaluate_proposals(const RankedProposals& proposals, const GroundTruth& gt,
                                std::span<const std::size_t> budgets) {
  MetricReport r;
  r.images = gt.images.size();
  r.ground_truth = gt.box_count();
  for (std::size_t k : budgets) {
    const auto best = best_overlaps(proposals, gt, k);
    double ar = 0.0;
    for (double t : average_recall_thresholds()) ar += recall_from(best, t);
    r.budgets.push_back(k);
    r.recall50.push_back(recall_from(best, 0.5));
    r.average_recall.push_back(ar / 10.0);
  }
  return r;
}

nlohmann::ordered_json to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["images"] = report.images;
  j["ground_truth_boxes"] = report.ground_truth;
  j["budgets"] = report.budgets;
  j["recall@0.5"] = report.recall50;
  j["average_recall"] = report.average_recall;
  if (report.ap) {
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (const auto& c : report.ap->per_class) {
      classes.push_back({{"category", c.category},
                         {"ap@0.5", c.ap},
                         {"ground_truth", c.ground_truth},
                         {"detections", c.detections},
                         {"in_vocabulary", c.in_vocabulary}});
    }
    j["ap@0.5"] = {{"mean", report.ap->mean_ap}, {"per_class", classes}};
  }
  return j;
}

std::string format_table(const MetricReport& report) {
  std::ostringstream out;
  char buf[64];
  const auto row = [&](const std::string& name, const std::vector<double>& values) {
    std::snprintf(buf, sizeof buf, "%-12s", name.c_str());
    out << buf;
    for (double v : values) {
      std::snprintf(buf, sizeof buf, "%9.4f", v);
      out << buf;
    }
    out << '\n';
  };
  std::snprintf(buf, sizeof buf, "%-12s", "budget");
  out << buf;
  for (std::size_t k : report.budgets) {
    std::snprintf(buf, sizeof buf, "%9zu", k);
    out << buf;
  }
  out << '\n';
  row("Recall@0.5", report.recall50);
  row("AR", report.average_recall);
  if (report.ap) {
    out << '\n';
    for (const auto& c : report.ap->per_class) {
      std::snprintf(buf, sizeof buf, "%-20s %7.4f%s\n", c.category.c_str(), c.ap,
                    c.in_vocabulary ? "" : "  (not in vocabulary)");
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-20s %7.4f\n", "mAP@0.5", report.ap->mean_ap);
    out << buf;
  }
  return out.str();
}

}  // namespace pclip
