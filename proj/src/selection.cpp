// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pclip/error.hpp"
#include "pclip/kernels.hpp"

namespace pclip {

std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::kInitial: return "initial";
    case Provenance::kMerged: return "merged";
    case Provenance::kRefined: return "refined";
  }
  return "initial";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "initial") return Provenance::kInitial;
  if (s == "merged") return Provenance::kMerged;
  if (s == "refined") return Provenance::kRefined;
  throw InvalidInput("unknown provenance '" + std::string(s) + "'");
}

void SelectionConfig::validate() const {
  if (!(retain_fraction > 0.0 && retain_fraction <= 1.0)) {
    throw ConfigError("retain_fraction must lie in (0, 1]");
  }
  if (!(lambda_sim >= 0.0) || !(lambda_sl >= 0.0)) {
    throw ConfigError("lambda_sim and lambda_sl must be non-negative");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("softmax temperature must be positive");
  }
}

SimilarityRow row_from_cosines(std::span<const double> cosines, double temperature) {
  if (cosines.size() < 2) throw InvalidInput("similarity rows need at least two categories");
  SimilarityRow row;
  row.probabilities = softmax(cosines, temperature);
  const auto it = std::max_element(row.probabilities.begin(), row.probabilities.end());
  row.argmax = static_cast<std::size_t>(it - row.probabilities.begin());
  row.max_similarity = *it;
  row.max_cosine = *std::max_element(cosines.begin(), cosines.end());
  return row;
}

SimilarityRow similarity_row(const EmbeddingVector& v, std::span<const EmbeddingVector> texts,
                             double temperature) {
  std::vector<double> cosines;
  cosines.reserve(texts.size());
  for (const auto& t : texts) cosines.push_back(cosine_similarity(v, t));
  return row_from_cosines(cosines, temperature);
}

std::vector<SimilarityRow> similarity_rows(std::span<const EmbeddingVector> regions,
                                           std::span<const EmbeddingVector> texts,
                                           double temperature, bool parallel) {
  if (texts.size() < 2) throw InvalidInput("similarity rows need at least two categories");
  if (regions.empty()) return {};
  const std::size_t dim = texts.front().dim();
  auto pack = [dim](std::span<const EmbeddingVector> vs) {
    std::vector<float> packed;
    packed.reserve(vs.size() * dim);
    for (const auto& v : vs) {
      if (v.dim() != dim) {
        throw InvalidInput("embedding dimension " + std::to_string(v.dim()) + " differs from " +
                           std::to_string(dim));
      }
      v.validate();
      packed.insert(packed.end(), v.values().begin(), v.values().end());
    }
    return packed;
  };
  const auto rows = pack(regions);
  const auto cols = pack(texts);
  std::vector<double> cos(regions.size() * texts.size());
  if (parallel) {
    kernels::parallel::cosine_matrix(rows, cols, dim, cos);
  } else {
    kernels::serial::cosine_matrix(rows, cols, dim, cos);
  }
  std::vector<SimilarityRow> out;
  out.reserve(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    std::span<double> r(cos.data() + i * texts.size(), texts.size());
    for (double& c : r) c = std::clamp(c, -1.0, 1.0);
    out.push_back(row_from_cosines(r, temperature));
  }
  return out;
}

double entropy(std::span<const double> p) {
  double e = 0.0;
  for (double x : p) {
    if (x > 0.0) e -= x * std::log(x);
  }
  return std::clamp(e, 0.0, std::log(static_cast<double>(p.size())));
}

double entropy(const SimilarityRow& row) { return entropy(row.probabilities); }

std::size_t retained_count(std::size_t total, double fraction) {
  if (total == 0) return 0;
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  return std::clamp<std::size_t>(k, 1, total);
}

std::vector<ScoredProposal> filter_by_entropy(std::vector<ScoredProposal> proposals,
                                              double retain_fraction) {
  if (proposals.empty()) throw InvalidInput("entropy filtering of an empty proposal list");
  if (!(retain_fraction > 0.0 && retain_fraction <= 1.0)) {
    throw InvalidInput("retain fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (proposals[a].entropy != proposals[b].entropy) {
      return proposals[a].entropy < proposals[b].entropy;
    }
    return proposals[a].initial_score > proposals[b].initial_score;
  });
  order.resize(retained_count(proposals.size(), retain_fraction));
  std::vector<ScoredProposal> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(std::move(proposals[i]));
  return out;
}

EntropyNormalizer EntropyNormalizer::over(std::span<const ScoredProposal> retained,
                                          std::size_t categories) {
  EntropyNormalizer n;
  n.retained = retained.size();
  n.categories = categories;
  double sq = 0.0;
  for (const auto& p : retained) sq += p.entropy * p.entropy;
  n.l2 = std::sqrt(sq);
  return n;
}

double EntropyNormalizer::entropy_term(double e) const noexcept {
  if (!(l2 > 0.0)) return 0.0;
  return -(static_cast<double>(retained) / static_cast<double>(categories)) * e / l2;
}

double objectness(const ScoredProposal& p, const EntropyNormalizer& norm,
                  const SelectionConfig& config) {
  const double max_sim = config.max_similarity == MaxSimilaritySource::kPostSoftmax
                             ? p.similarity.max_similarity
                             : p.similarity.max_cosine;
  return norm.entropy_term(p.entropy) + config.lambda_sim * max_sim +
         config.lambda_sl * p.initial_score;
}

std::vector<ScoredProposal> objectness_scores(std::vector<ScoredProposal> retained,
                                              std::size_t categories,
                                              const SelectionConfig& config) {
  if (retained.empty()) throw InvalidInput("objectness scoring needs at least one proposal");
  if (categories < 2) throw InvalidInput("objectness scoring needs at least two categories");
  const auto norm = EntropyNormalizer::over(retained, categories);
  for (auto& p : retained) p.objectness = objectness(p, norm, config);
  std::stable_sort(retained.begin(), retained.end(),
                   [](const auto& a, const auto& b) { return *a.objectness > *b.objectness; });
  return retained;
}

std::vector<ScoredProposal> score_proposals(EmbeddingProvider& provider, const ImageRef& image,
                                            std::span<const InitialProposal> initial,
                                            std::span<const EmbeddingVector> texts,
                                            double temperature) {
  std::vector<EmbeddingVector> regions;
  regions.reserve(initial.size());
  for (const auto& p : initial) regions.push_back(provider.embed_region(image, p.box));
  const auto rows = similarity_rows(regions, texts, temperature);
  std::vector<ScoredProposal> out(initial.size());
  for (std::size_t i = 0; i < initial.size(); ++i) {
    out[i].box = initial[i].box;
    out[i].initial_score = initial[i].score;
    out[i].similarity = rows[i];
    out[i].entropy = entropy(rows[i]);
    out[i].embedding = std::move(regions[i]);
  }
  return out;
}

ScoredProposal score_box(EmbeddingProvider& provider, const ImageRef& image, const BBox& box,
                         double initial_score, std::span<const EmbeddingVector> texts,
                         double temperature, Provenance provenance) {
  ScoredProposal p;
  p.box = box;
  p.initial_score = initial_score;
  p.embedding = provider.embed_region(image, box);
  p.similarity = similarity_row(p.embedding, texts, temperature);
  p.entropy = entropy(p.similarity);
  p.provenance = provenance;
  return p;
}

SelectionResult select_proposals(std::vector<ScoredProposal> scored, std::size_t categories,
                                 const SelectionConfig& config) {
  config.validate();
  SelectionResult r;
  if (scored.empty()) return r;
  auto retained = filter_by_entropy(std::move(scored), config.retain_fraction);
  r.normalizer = EntropyNormalizer::over(retained, categories);
  for (const auto& p : retained) r.max_entropy = std::max(r.max_entropy, p.entropy);
  r.selected = objectness_scores(std::move(retained), categories, config);
  return r;
}

// ---------------------------------------------------------------------------

EntropyAnalysis analyze_entropies(std::span<const AnalysisImage> images, std::size_t categories,
                                  std::size_t bins, double iou_threshold) {
  if (categories < 2) throw InvalidInput("entropy analysis needs at least two categories");
  if (bins == 0) throw InvalidInput("histogram needs at least one bin");
  const bool any_gt = std::any_of(images.begin(), images.end(),
                                  [](const auto& im) { return !im.ground_truth.empty(); });
  if (!any_gt) throw InvalidInput("entropy analysis needs ground-truth boxes");

  EntropyAnalysis a;
  a.categories = categories;
  const double max_e = std::log(static_cast<double>(categories));
  a.bin_edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) a.bin_edges[i] = max_e * double(i) / double(bins);
  a.hist_correct.assign(bins, 0);
  a.hist_incorrect.assign(bins, 0);

  double sum_correct = 0.0, sum_incorrect = 0.0;
  for (const auto& im : images) {
    if (im.proposals.size() != im.entropies.size()) {
      throw InvalidInput("entropy analysis needs one entropy per proposal");
    }
    for (std::size_t i = 0; i < im.proposals.size(); ++i) {
      const double e = im.entropies[i];
      const bool correct = std::any_of(im.ground_truth.begin(), im.ground_truth.end(),
                                       [&](const BBox& g) {
                                         return iou(im.proposals[i], g) > iou_threshold;
                                       });
      auto bin = static_cast<std::size_t>(std::clamp(e / max_e, 0.0, 1.0) * double(bins));
      bin = std::min(bin, bins - 1);
      if (correct) {
        ++a.correct_count;
        sum_correct += e;
        ++a.hist_correct[bin];
      } else {
        ++a.incorrect_count;
        sum_incorrect += e;
        ++a.hist_incorrect[bin];
      }
    }
  }
  if (a.correct_count > 0) a.mean_correct = sum_correct / double(a.correct_count);
  if (a.incorrect_count > 0) a.mean_incorrect = sum_incorrect / double(a.incorrect_count);
  return a;
}

}  // namespace pclip
