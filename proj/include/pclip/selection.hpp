// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pclip/embeddings.hpp"
#include "pclip/geometry.hpp"
#include "pclip/initial_proposals.hpp"

namespace pclip {

enum class Provenance { kInitial, kMerged, kRefined };

std::string_view to_string(Provenance p) noexcept;
Provenance parse_provenance(std::string_view s);

/// Softmax-normalized similarities of one region to every category.
struct SimilarityRow {
  std::vector<double> probabilities;
  double max_similarity = 0.0;  // largest post-softmax probability
  double max_cosine = 0.0;      // largest raw cosine, for the pre-softmax variant
  std::size_t argmax = 0;
};

struct ScoredProposal {
  BBox box;
  double initial_score = 0.0;  // SL
  SimilarityRow similarity;
  double entropy = 0.0;  // nats, in [0, ln C]
  std::optional<double> objectness;
  Provenance provenance = Provenance::kInitial;
  EmbeddingVector embedding;  // region feature, needed by merging/regression
};

enum class MaxSimilaritySource { kPostSoftmax, kCosine };

struct SelectionConfig {
  double retain_fraction = 0.6;
  double lambda_sim = 0.06;
  double lambda_sl = 1.0;
  double temperature = 100.0;
  MaxSimilaritySource max_similarity = MaxSimilaritySource::kPostSoftmax;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Builds a row from raw cosine similarities.
SimilarityRow row_from_cosines(std::span<const double> cosines, double temperature);

/// Cosine of `v` with every text vector, softmax at `temperature`.
SimilarityRow similarity_row(const EmbeddingVector& v, std::span<const EmbeddingVector> texts,
                             double temperature);

/// Rows for many regions at once through the cosine-matrix kernel. Each row
/// equals what similarity_row() returns for that region.
std::vector<SimilarityRow> similarity_rows(std::span<const EmbeddingVector> regions,
                                           std::span<const EmbeddingVector> texts,
                                           double temperature, bool parallel = true);

/// Shannon entropy in nats with 0 ln 0 = 0, clamped to [0, ln C].
double entropy(const SimilarityRow& row);
double entropy(std::span<const double> probabilities);

/// Number of proposals kept out of `total`: max(1, round(fraction * total)).
std::size_t retained_count(std::size_t total, double fraction);

/// Keeps the retained_count() lowest-entropy proposals. Ties go to the higher
/// initial score, then the earlier input position. Output is sorted by that
/// same order (ascending entropy). Throws InvalidInput for empty input.
std::vector<ScoredProposal> filter_by_entropy(std::vector<ScoredProposal> proposals,
                                              double retain_fraction);

/// Per-image constants of the entropy term: T, C and the L2 norm of the
/// retained entropies.
struct EntropyNormalizer {
  std::size_t retained = 0;
  std::size_t categories = 0;
  double l2 = 0.0;

  static EntropyNormalizer over(std::span<const ScoredProposal> retained, std::size_t categories);
  /// -(T / C) * E / l2, or 0 when every retained entropy is 0.
  double entropy_term(double entropy) const noexcept;
};

double objectness(const ScoredProposal& p, const EntropyNormalizer& norm,
                  const SelectionConfig& config);

/// Assigns the objectness score to every retained proposal using the L2
/// normalizer over this set, then sorts by descending score (stable).
std::vector<ScoredProposal> objectness_scores(std::vector<ScoredProposal> retained,
                                              std::size_t categories,
                                              const SelectionConfig& config);

/// Embeds every initial proposal and computes its similarity row and entropy.
std::vector<ScoredProposal> score_proposals(EmbeddingProvider& provider, const ImageRef& image,
                                            std::span<const InitialProposal> initial,
                                            std::span<const EmbeddingVector> texts,
                                            double temperature);

/// Embeds and scores a single box (used for merged and refined boxes).
ScoredProposal score_box(EmbeddingProvider& provider, const ImageRef& image, const BBox& box,
                         double initial_score, std::span<const EmbeddingVector> texts,
                         double temperature, Provenance provenance);

struct SelectionResult {
  std::vector<ScoredProposal> selected;  // sorted by descending objectness
  EntropyNormalizer normalizer;
  double max_entropy = 0.0;  // over the selected set
};

/// filter_by_entropy followed by objectness_scores.
SelectionResult select_proposals(std::vector<ScoredProposal> scored, std::size_t categories,
                                 const SelectionConfig& config);

// ---------------------------------------------------------------------------
// Entropy analysis

struct EntropyAnalysis {
  std::size_t categories = 0;
  std::size_t correct_count = 0;
  std::size_t incorrect_count = 0;
  std::optional<double> mean_correct;  // absent when there are no correct proposals
  std::optional<double> mean_incorrect;
  std::vector<double> bin_edges;  // bins + 1 edges over [0, ln C]
  std::vector<std::size_t> hist_correct;
  std::vector<std::size_t> hist_incorrect;
};

struct AnalysisImage {
  std::vector<BBox> proposals;
  std::vector<double> entropies;
  std::vector<BBox> ground_truth;
};

/// Splits proposals into correct (IoU with some ground-truth box above
/// `iou_threshold`) and incorrect, and summarizes their entropies. Throws
/// InvalidInput when no ground truth is given at all.
EntropyAnalysis analyze_entropies(std::span<const AnalysisImage> images, std::size_t categories,
                                  std::size_t bins = 50, double iou_threshold = 0.5);

}  // namespace pclip
