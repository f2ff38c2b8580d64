// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/merging.hpp"

#include <algorithm>
#include <numeric>

#include "pclip/error.hpp"
#include "pclip/kernels.hpp"

namespace pclip {

void MergeConfig::validate() const {
  if (!(thr_iou > 0.0 && thr_iou < 1.0) || !(thr_psim > 0.0 && thr_psim < 1.0)) {
    throw ConfigError("merge thresholds must lie in (0, 1)");
  }
}

ProposalGraph::ProposalGraph(std::size_t nodes, std::vector<std::uint8_t> adjacency)
    : nodes_(nodes), adjacency_(std::move(adjacency)) {
  if (adjacency_.size() != nodes_ * nodes_) throw InvalidInput("adjacency size mismatch");
  for (std::size_t i = 0; i < nodes_; ++i) {
    if (adjacency_[i * nodes_ + i]) throw InvalidInput("proposal graph has a self-edge");
    for (std::size_t j = i + 1; j < nodes_; ++j) {
      if ((adjacency_[i * nodes_ + j] != 0) != (adjacency_[j * nodes_ + i] != 0)) {
        throw InvalidInput("proposal graph adjacency is not symmetric");
      }
    }
  }
}

ProposalGraph ProposalGraph::from_edges(std::size_t nodes,
                                        std::span<const std::pair<std::size_t, std::size_t>> edges) {
  std::vector<std::uint8_t> adj(nodes * nodes, 0);
  for (auto [i, j] : edges) {
    if (i >= nodes || j >= nodes) throw InvalidInput("edge endpoint out of range");
    if (i == j) throw InvalidInput("proposal graph has a self-edge");
    adj[i * nodes + j] = adj[j * nodes + i] = 1;
  }
  return ProposalGraph(nodes, std::move(adj));
}

std::size_t ProposalGraph::edge_count() const noexcept {
  std::size_t n = 0;
  for (std::size_t i = 0; i < nodes_; ++i)
    for (std::size_t j = i + 1; j < nodes_; ++j) n += edge(i, j) ? 1 : 0;
  return n;
}

std::vector<std::pair<std::size_t, std::size_t>> ProposalGraph::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < nodes_; ++i)
    for (std::size_t j = i + 1; j < nodes_; ++j)
      if (edge(i, j)) out.emplace_back(i, j);
  return out;
}

ProposalGraph build_graph(std::span<const ScoredProposal> selected, const MergeConfig& config) {
  const std::size_t n = selected.size();
  if (n == 0) return {};
  const std::size_t dim = selected.front().embedding.dim();
  std::vector<BBox> boxes;
  std::vector<float> features;
  boxes.reserve(n);
  features.reserve(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = selected[i];
    if (p.embedding.dim() == 0) {
      throw InvalidInput("proposal " + std::to_string(i) + " " + to_string(p.box) +
                         " carries no region embedding");
    }
    if (p.embedding.dim() != dim) {
      throw InvalidInput("proposal " + std::to_string(i) + " embedding dimension differs");
    }
    p.embedding.validate();
    validate(p.box, "proposal " + std::to_string(i));
    boxes.push_back(p.box);
    features.insert(features.end(), p.embedding.values().begin(), p.embedding.values().end());
  }
  std::vector<std::uint8_t> adj(n * n, 0);
  if (config.parallel) {
    kernels::parallel::pairwise_edges(boxes, features, dim, config.thr_iou, config.thr_psim, adj);
  } else {
    kernels::serial::pairwise_edges(boxes, features, dim, config.thr_iou, config.thr_psim, adj);
  }
  return ProposalGraph(n, std::move(adj));
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<unsigned> rank_;
};

}  // namespace

std::vector<std::vector<std::size_t>> connected_components(const ProposalGraph& graph) {
  const std::size_t n = graph.size();
  DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (graph.edge(i, j)) sets.unite(i, j);

  // Visiting nodes in ascending order numbers components by smallest member.
  std::vector<std::size_t> slot(n, n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    if (slot[root] == n) {
      slot[root] = out.size();
      out.emplace_back();
    }
    out[slot[root]].push_back(i);
  }
  return out;
}

double merged_initial_score(std::span<const ScoredProposal> members) {
  if (members.empty()) throw InvalidInput("merged score of an empty component");
  double best = members.front().initial_score;
  for (const auto& m : members) best = std::max(best, m.initial_score);
  return best;
}

MergeOutcome merge_components(std::span<const std::vector<std::size_t>> components,
                              std::span<const ScoredProposal> selected,
                              const MergeContext& context) {
  if (!context.provider) throw InvalidInput("merging needs an embedding provider");
  MergeOutcome out;
  for (const auto& component : components) {
    if (component.size() < 2) continue;
    ++out.candidates;
    std::vector<BBox> boxes;
    std::vector<ScoredProposal> members;
    for (std::size_t idx : component) {
      if (idx >= selected.size()) throw InvalidInput("component member out of range");
      boxes.push_back(selected[idx].box);
      members.push_back(selected[idx]);
    }
    auto merged = score_box(*context.provider, context.image, envelope(boxes),
                            merged_initial_score(members), context.texts,
                            context.selection.temperature, Provenance::kMerged);
    if (merged.entropy > context.max_entropy) {
      ++out.rejected;
      continue;
    }
    merged.objectness = objectness(merged, context.normalizer, context.selection);
    out.admitted.push_back(std::move(merged));
  }
  return out;
}

MergeOutcome merge_proposals(SelectionResult& selection, const MergeConfig& config,
                             const MergeContext& context) {
  const auto graph = build_graph(selection.selected, config);
  const auto components = connected_components(graph);
  auto outcome = merge_components(components, selection.selected, context);
  for (const auto& p : outcome.admitted) selection.selected.push_back(p);
  std::stable_sort(selection.selected.begin(), selection.selected.end(),
                   [](const auto& a, const auto& b) { return *a.objectness > *b.objectness; });
  return outcome;
}

}  // namespace pclip
