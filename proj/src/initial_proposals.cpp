// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/initial_proposals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "pclip/error.hpp"

namespace pclip {

namespace {

double number_field(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw FormatError(std::string("missing or non-numeric field \"") + key + "\"", where);
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw FormatError(std::string("non-finite \"") + key + "\"", where);
  return v;
}

std::optional<double> optional_number(const nlohmann::json& j, const char* key,
                                      const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return number_field(j, key, where);
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key,
                                           const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) throw FormatError(std::string("\"") + key + "\" must be a string", where);
  return j[key].get<std::string>();
}

}  // namespace

std::vector<ProposalRecord> read_proposal_records(std::istream& in, const std::string& name) {
  std::vector<ProposalRecord> out;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + " line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("malformed JSON: ") + e.what(), where);
    }
    if (!j.is_object()) throw FormatError("record is not a JSON object", where);
    ProposalRecord r;
    r.line = line_no;
    const auto id = optional_string(j, "image_id", where);
    if (!id) throw FormatError("missing field \"image_id\"", where);
    r.image_id = *id;
    r.box = {number_field(j, "x0", where), number_field(j, "y0", where),
             number_field(j, "x1", where), number_field(j, "y1", where)};
    if (!(r.box.x_max > r.box.x_min) || !(r.box.y_max > r.box.y_min)) {
      throw FormatError("box must satisfy x0 < x1 and y0 < y1", where);
    }
    r.score = number_field(j, "score", where);
    if (r.score < 0.0) throw FormatError("score must be non-negative", where);
    r.entropy = optional_number(j, "entropy", where);
    r.objectness = optional_number(j, "objectness", where);
    r.argmax_category = optional_string(j, "argmax_category", where);
    r.provenance = optional_string(j, "provenance", where);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ProposalRecord> read_proposal_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open proposal file " + path.string());
  return read_proposal_records(in, path.string());
}

void write_proposal_records(std::ostream& out, const std::vector<ProposalRecord>& records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["image_id"] = r.image_id;
    j["x0"] = r.box.x_min;
    j["y0"] = r.box.y_min;
    j["x1"] = r.box.x_max;
    j["y1"] = r.box.y_max;
    j["score"] = r.score;
    if (r.entropy) j["entropy"] = *r.entropy;
    if (r.objectness) j["objectness"] = *r.objectness;
    if (r.argmax_category) j["argmax_category"] = *r.argmax_category;
    if (r.provenance) j["provenance"] = *r.provenance;
    out << j.dump() << '\n';
  }
}

void write_proposal_records(const std::filesystem::path& path,
                            const std::vector<ProposalRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_proposal_records(out, records);
  if (!out) throw Error("short write to " + path.string());
}

std::vector<InitialProposal> select_initial(const std::vector<ProposalRecord>& records,
                                            const std::string& image_id, std::size_t budget,
                                            int image_w, int image_h) {
  const double w = image_w > 0 ? image_w : std::numeric_limits<double>::max();
  const double h = image_h > 0 ? image_h : std::numeric_limits<double>::max();
  std::vector<InitialProposal> out;
  for (const auto& r : records) {
    if (r.image_id != image_id) continue;
    try {
      out.push_back({clamp_to_image(r.box, w, h), r.score});
    } catch (const InvalidInput& e) {
      throw FormatError(std::string("box lies outside the image: ") + e.what(),
                        "line " + std::to_string(r.line));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  if (out.size() > budget) out.resize(budget);
  return out;
}

std::vector<InitialProposal> load_proposals(const std::filesystem::path& path,
                                            const std::string& image_id, std::size_t budget,
                                            int image_w, int image_h) {
  return select_initial(read_proposal_records(path), image_id, budget, image_w, image_h);
}

// ---------------------------------------------------------------------------

std::vector<kernels::Window> builtin_windows(int width, int height,
                                             const BuiltinGeneratorConfig& config) {
  std::vector<kernels::Window> windows;
  const double side = std::min(width, height);
  for (double scale : config.scales) {
    for (double aspect : config.aspects) {
      const int ww = static_cast<int>(std::lround(scale * side * std::sqrt(aspect)));
      const int wh = static_cast<int>(std::lround(scale * side / std::sqrt(aspect)));
      if (ww < 4 || wh < 4 || ww > width || wh > height) continue;
      const int sx = std::max(1, static_cast<int>(ww * config.stride_fraction));
      const int sy = std::max(1, static_cast<int>(wh * config.stride_fraction));
      const int margin =
          std::max(1, static_cast<int>(std::lround(std::min(ww, wh) * config.margin_fraction)));
      for (int y = 0; y + wh <= height; y += sy)
        for (int x = 0; x + ww <= width; x += sx) windows.push_back({x, y, x + ww, y + wh, margin});
    }
  }
  return windows;
}

std::vector<InitialProposal> generate_builtin(const Image& image, std::size_t budget,
                                              const BuiltinGeneratorConfig& config) {
  if (image.width() < 16 || image.height() < 16) {
    throw InvalidInput("built-in proposal generator needs an image of at least 16x16 pixels");
  }
  const int w = image.width(), h = image.height();
  const auto gray = image.to_gray();
  std::vector<float> magnitude(gray.size());
  const auto windows = builtin_windows(w, h, config);
  std::vector<double> scores(windows.size());
  if (config.parallel) {
    kernels::parallel::sobel_magnitude(gray, w, h, magnitude);
    kernels::parallel::window_scores(kernels::integral_image(magnitude, w, h), windows, scores);
  } else {
    kernels::serial::sobel_magnitude(gray, w, h, magnitude);
    kernels::serial::window_scores(kernels::integral_image(magnitude, w, h), windows, scores);
  }

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<InitialProposal> out;
  for (std::size_t idx : order) {
    if (out.size() >= budget) break;
    const auto& win = windows[idx];
    const BBox box{double(win.x0), double(win.y0), double(win.x1), double(win.y1)};
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const InitialProposal& p) {
      return iou_unchecked(p.box, box) > config.dedup_iou;
    });
    if (!duplicate) out.push_back({box, scores[idx]});
  }
  return out;
}

// ---------------------------------------------------------------------------

FileProposalSource::FileProposalSource(const std::filesystem::path& path, std::size_t budget)
    : budget_(budget) {
  for (auto& r : read_proposal_records(path)) by_image_[r.image_id].push_back(std::move(r));
}

std::vector<InitialProposal> FileProposalSource::proposals(const ImageRef& image) {
  const auto it = by_image_.find(image.id);
  if (it == by_image_.end()) return {};
  return select_initial(it->second, image.id, budget_, image.width(), image.height());
}

std::vector<std::string> FileProposalSource::image_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : by_image_) ids.push_back(id);
  return ids;
}

std::vector<InitialProposal> BuiltinProposalSource::proposals(const ImageRef& image) {
  if (!image.pixels) throw InvalidInput("built-in generator needs pixels for image " + image.id);
  return generate_builtin(*image.pixels, budget_, config_);
}

}  // namespace pclip
