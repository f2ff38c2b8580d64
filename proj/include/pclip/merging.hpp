// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "pclip/embeddings.hpp"
#include "pclip/selection.hpp"

namespace pclip {

struct MergeConfig {
  double thr_iou = 0.5;
  double thr_psim = 0.9;
  bool parallel = true;

  /// Throws ConfigError unless both thresholds lie in (0, 1).
  void validate() const;
};

/// Undirected graph over selected proposals stored as a dense symmetric
/// adjacency matrix without self-edges.
class ProposalGraph {
 public:
  ProposalGraph() = default;
  ProposalGraph(std::size_t nodes, std::vector<std::uint8_t> adjacency);
  /// Graph from an explicit edge list (used by tests and tools).
  static ProposalGraph from_edges(std::size_t nodes,
                                  std::span<const std::pair<std::size_t, std::size_t>> edges);

  std::size_t size() const noexcept { return nodes_; }
  bool edge(std::size_t i, std::size_t j) const noexcept { return adjacency_[i * nodes_ + j] != 0; }
  std::size_t edge_count() const noexcept;
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;

 private:
  std::size_t nodes_ = 0;
  std::vector<std::uint8_t> adjacency_;
};

/// Edge between i and j iff IoU(i, j) >= thr_iou and the cosine of their
/// region embeddings >= thr_psim. Throws InvalidInput naming the first
/// proposal without an embedding.
ProposalGraph build_graph(std::span<const ScoredProposal> selected, const MergeConfig& config);

/// Maximal connected subgraphs. Members are ascending and components are
/// ordered by their smallest member.
std::vector<std::vector<std::size_t>> connected_components(const ProposalGraph& graph);

/// Initial score of a merged proposal: the largest member score.
double merged_initial_score(std::span<const ScoredProposal> members);

/// Everything merge_components needs to re-embed and re-score candidates.
struct MergeContext {
  EmbeddingProvider* provider = nullptr;
  ImageRef image;
  std::span<const EmbeddingVector> texts;
  SelectionConfig selection;
  EntropyNormalizer normalizer;  // from the selection stage, not recomputed
  double max_entropy = 0.0;      // over the selected proposals of this image
};

struct MergeOutcome {
  std::vector<ScoredProposal> admitted;  // provenance = merged, objectness set
  std::size_t candidates = 0;            // multi-node components
  std::size_t rejected = 0;              // candidates whose entropy exceeded max_entropy
};

/// Singleton components are dropped; every other component becomes the
/// envelope of its member boxes, which is embedded and scored. Candidates
/// whose entropy exceeds `context.max_entropy` are discarded.
MergeOutcome merge_components(std::span<const std::vector<std::size_t>> components,
                              std::span<const ScoredProposal> selected,
                              const MergeContext& context);

/// build_graph + connected_components + merge_components; admitted proposals
/// are appended to `selection.selected`, which is then re-sorted by
/// descending objectness (stable).
MergeOutcome merge_proposals(SelectionResult& selection, const MergeConfig& config,
                             const MergeContext& context);

}  // namespace pclip
