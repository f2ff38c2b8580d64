// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pclip/embeddings.hpp"
#include "pclip/geometry.hpp"
#include "pclip/selection.hpp"

namespace pclip {

// ---------------------------------------------------------------------------
// Pseudo labels

/// A proposal from the training pool, reduced to what label mining needs.
struct PoolProposal {
  std::string image_id;
  BBox box;
  double entropy = 0.0;
  double initial_score = 0.0;
};

struct PseudoLabel {
  std::string image_id;
  BBox box;
  double entropy = 0.0;
  double initial_score = 0.0;
};

/// Intersection of the ceil(p_entropy * |pool|) lowest-entropy proposals and
/// the ceil(p_score * |pool|) highest-initial-score proposals, ranked over the
/// whole pool. Ties in either ranking go to the smaller (image_id, box). The
/// result is sorted by (image_id, box). An empty intersection logs a warning.
/// Throws InvalidInput unless both fractions lie in (0, 1].
std::vector<PseudoLabel> mine_pseudo_labels(std::span<const PoolProposal> pool,
                                            double p_entropy = 0.01, double p_score = 0.05);

// ---------------------------------------------------------------------------
// Regressor network

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weight;  // out_dim x in_dim, row-major
  std::vector<double> bias;
};

struct BatchNormLayer {
  std::size_t dim = 0;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// [region; image; box] -> FC+BN+ReLU -> FC+BN+ReLU -> FC -> sigmoid.
struct RegressorParams {
  std::size_t embedding_dim = 0;
  DenseLayer fc1;
  BatchNormLayer bn1;
  DenseLayer fc2;
  BatchNormLayer bn2;
  DenseLayer fc3;

  /// He-normal hidden weights, zero biases, unit BN scale, and a uniform
  /// +-1/sqrt(fan_in) output layer, all drawn from `seed`.
  static RegressorParams initialize(std::size_t embedding_dim, std::size_t hidden1,
                                    std::size_t hidden2, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return 2 * embedding_dim + 4; }

  /// Throws InvalidInput unless the layers chain input -> h1 -> h2 -> 4, every
  /// tensor has its declared size, all values are finite and running
  /// variances are non-negative.
  void validate() const;

  /// Every tensor in file order: per dense layer weight then bias, per BN
  /// layer gamma, beta, running mean, running variance.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
};

/// Network input row: both embeddings L2-normalized, followed by the
/// normalized box coordinates. Throws InvalidInput when the embeddings differ
/// in dimension or are degenerate.
std::vector<double> regressor_features(const EmbeddingVector& region,
                                       const EmbeddingVector& image,
                                       const NormalizedBBox& coords);

struct RegressorOutput {
  std::array<double, 4> raw{};  // sigmoid outputs before reordering
  NormalizedBBox box;           // min/max ordered
  bool degenerate = false;      // zero width or height after ordering
};

/// Inference with running BN statistics. `features` holds `count` rows of
/// input_dim() values. Pure; safe to call concurrently.
std::vector<RegressorOutput> predict(const RegressorParams& params,
                                     std::span<const double> features, std::size_t count);
RegressorOutput predict_one(const RegressorParams& params, std::span<const double> features);

// ---------------------------------------------------------------------------
// Loss

/// Mean over the 4 coordinates of 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
double smooth_l1(std::span<const double, 4> prediction, std::span<const double, 4> target);
/// d smooth_l1 / d prediction.
std::array<double, 4> smooth_l1_gradient(std::span<const double, 4> prediction,
                                         std::span<const double, 4> target);

/// Mean smooth_l1 of one training-mode batch (BN over the batch) and, when
/// `gradients` is non-null, its gradient with respect to every trainable
/// tensor. `gradients` is reshaped to match `params`; its running statistics
/// are left zero. Running statistics of `params` are not touched.
double batch_loss(const RegressorParams& params, std::span<const double> features,
                  std::span<const double> targets, std::size_t count,
                  RegressorParams* gradients = nullptr, bool parallel = false);

// ---------------------------------------------------------------------------
// Training

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 1e-5;
  std::size_t batch_size = 64;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 256;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  /// Jittered copies of each pseudo label added to the training set.
  std::size_t jitters = 8;
  double jitter_shift = 0.1;  // fraction of the box side
  double jitter_scale_min = 0.8;
  double jitter_scale_max = 1.25;

  /// Use the OpenMP dense kernels. Results are bitwise identical to the
  /// serial path.
  bool parallel = false;

  /// Throws ConfigError on out-of-range fields (epochs >= 1, lr >= 0, batch
  /// size >= 2, positive hidden sizes, 0 < scale_min <= scale_max).
  void validate() const;
};

struct TrainingPair {
  std::vector<double> features;  // regressor_features() row
  NormalizedBBox target;
};

struct TrainResult {
  RegressorParams params;
  std::vector<double> loss_history;  // mean per-sample loss of each epoch
};

/// Adam (or SGD) over shuffled mini-batches. Batches of a single sample are
/// skipped. Throws InvalidInput for an empty set and Error when the loss
/// becomes non-finite.
TrainResult train(std::span<const TrainingPair> pairs, const TrainConfig& config);

/// Looks an image up by id for embedding and jittering.
using ImageLookup = std::function<ImageRef(const std::string& image_id)>;

/// One pair per label for the label box itself plus `config.jitters` jittered
/// copies, all regressing to the label box. Jitters that fall outside the
/// image or that the provider rejects are skipped.
std::vector<TrainingPair> build_training_pairs(std::span<const PseudoLabel> labels,
                                               EmbeddingProvider& provider,
                                               const ImageLookup& images,
                                               const TrainConfig& config);

/// Jittered copy of `box`: each side shifted by up to `shift` of its length
/// and the size scaled by a factor in [scale_min, scale_max], clamped to the
/// image. `u` supplies four uniform draws in [0, 1).
BBox jitter_box(const BBox& box, std::span<const double, 4> u, double shift, double scale_min,
                double scale_max, double image_w, double image_h);

// ---------------------------------------------------------------------------
// Refinement

struct RefinementContext {
  EmbeddingProvider* provider = nullptr;
  ImageRef image;
  EmbeddingVector image_embedding;
  std::span<const EmbeddingVector> texts;
  SelectionConfig selection;
  EntropyNormalizer normalizer;
};

inline constexpr double kReplacementIoU = 0.75;

/// Re-embeds `refined` and returns it (provenance refined, objectness
/// recomputed) iff its entropy is strictly lower than the original's and
/// IoU(refined, original) > 0.75. Otherwise, or when embedding fails (logged
/// as a warning), returns `original` unchanged.
ScoredProposal apply_replacement(const ScoredProposal& original, const BBox& refined,
                                 const RefinementContext& context);

/// Runs the regressor over every proposal and applies the replacement rule.
/// The result is re-sorted by descending objectness (stable).
std::vector<ScoredProposal> refine_proposals(const RegressorParams& params,
                                             std::span<const ScoredProposal> proposals,
                                             const RefinementContext& context);

// ---------------------------------------------------------------------------
// Files

/// Binary parameter file: "PCRG", u16 version, u16 layer count, u32 layer
/// widths (input, h1, h2, 4), then float32 tensors in tensors() order, all
/// little-endian.
std::vector<std::uint8_t> encode_regressor(const RegressorParams& params);
RegressorParams decode_regressor(std::span<const std::uint8_t> bytes);
void save_regressor(const std::filesystem::path& path, const RegressorParams& params);
RegressorParams load_regressor(const std::filesystem::path& path);

/// "epoch,mean_loss" CSV, epochs numbered from 1.
void write_loss_csv(const std::filesystem::path& path, std::span<const double> loss_history);

}  // namespace pclip
