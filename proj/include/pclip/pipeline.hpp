// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pclip/embeddings.hpp"
#include "pclip/evaluation.hpp"
#include "pclip/initial_proposals.hpp"
#include "pclip/merging.hpp"
#include "pclip/regression.hpp"
#include "pclip/selection.hpp"

namespace pclip {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

/// Overrides the directory of relative ONNX model paths.
inline constexpr const char* kModelDirEnv = "PCLIP_MODEL_DIR";

enum class BackendKind { kSynthetic, kPrecomputed, kOnnx };
enum class DetectionScore { kObjectness, kMaxSimilarity };

struct StageToggles {
  bool selection = true;
  bool merging = true;
  bool regression = false;
};

struct PipelineConfig {
  // Inputs. Relative paths in a config file resolve against its directory.
  std::filesystem::path images;
  std::filesystem::path proposals;  // JSON lines; ignored when builtin_proposals
  bool builtin_proposals = false;
  BackendKind backend = BackendKind::kSynthetic;
  std::filesystem::path embeddings;    // PCEB store for the precomputed backend
  std::filesystem::path image_model;   // ONNX image encoder
  std::filesystem::path text_vectors;  // PCEB txt: records for the ONNX backend
  std::filesystem::path vocabulary;
  std::string prompt_template = std::string(CategoryVocabulary::kDefaultTemplate);
  std::filesystem::path ground_truth;  // optional
  std::filesystem::path regressor;     // PCRG file, read by the regression stage
  std::filesystem::path training_images;  // train-regressor input; defaults to images
  std::filesystem::path training_proposals;

  std::filesystem::path output = "pclip-out";
  std::uint64_t seed = 0;
  int workers = 1;
  std::size_t budget = kDefaultProposalBudget;
  std::size_t top_k = 0;  // cap on emitted proposals per image, 0 = all

  StageToggles stages;
  SelectionConfig selection;
  MergeConfig merging;
  TrainConfig training;
  double pseudo_entropy_fraction = 0.01;
  double pseudo_score_fraction = 0.05;
  BuiltinGeneratorConfig builtin;
  SyntheticProvider::Options synthetic;
  DetectionScore detection_score = DetectionScore::kObjectness;
  double nms_threshold = 0.5;
  bool overlays = false;
  std::size_t overlay_top_k = 10;

  /// Throws ConfigError naming the offending key. Unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& doc,
                                  const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;

  /// Stage ordering (merging and regression need selection), value ranges,
  /// and existence of every configured input path. Throws ConfigError.
  void validate() const;
};

/// Builds the configured embedding backend. Exclusive backends come back
/// wrapped in a SerializedProvider.
std::shared_ptr<EmbeddingProvider> make_provider(const PipelineConfig& config);

/// Image files of a directory (PGM/PPM, plus common raster formats when built
/// with OpenCV) keyed by file stem, sorted by id.
std::vector<std::pair<std::string, std::filesystem::path>> list_images(
    const std::filesystem::path& dir);

/// Per-image snapshot after every stage that ran.
struct ImageOutcome {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<InitialProposal> initial;
  std::optional<std::vector<ScoredProposal>> selected;
  std::optional<std::vector<ScoredProposal>> merged;
  std::optional<std::vector<ScoredProposal>> refined;
  std::map<std::string, double> seconds;  // stage name -> wall time for this image

  /// Output of the last stage that ran.
  const std::vector<ScoredProposal>* final_scored() const noexcept;
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;  // summed over images
};

struct RunResult {
  std::vector<ImageOutcome> images;  // sorted by image id
  std::vector<StageTiming> stages;   // in execution order
  std::vector<std::string> categories;
  std::optional<MetricReport> metrics;
  std::vector<std::filesystem::path> outputs;
};

inline constexpr const char* kStageInitial = "initial_proposals";
inline constexpr const char* kStageSelection = "selection";
inline constexpr const char* kStageMerging = "merging";
inline constexpr const char* kStageRegression = "regression";

/// Runs the enabled stages over every image without writing anything.
/// Failures are rethrown as StageError naming the stage and image.
RunResult process(const PipelineConfig& config);

/// process() followed by evaluation (when ground truth is configured) and
/// artifact emission into config.output: initial.jsonl plus one file per
/// stage that ran, proposals.jsonl (final stage), metrics.json/.txt,
/// manifest.json and optional overlays/. Files written before a failure are
/// removed.
RunResult run(const PipelineConfig& config);

/// Ranked boxes of one stage for evaluation.
RankedProposals ranked_boxes(const RunResult& result, const std::string& stage);

/// Labeled detections from final proposals (argmax category, configured score).
DetectionsByImage detections(const RunResult& result, const PipelineConfig& config);

/// Records for the proposal JSON-lines format.
std::vector<ProposalRecord> to_records(const std::string& image_id,
                                       std::span<const InitialProposal> proposals);
std::vector<ProposalRecord> to_records(const std::string& image_id,
                                       std::span<const ScoredProposal> proposals,
                                       const std::vector<std::string>& categories);

struct TrainingOutcome {
  std::size_t pool_size = 0;
  std::vector<PseudoLabel> labels;
  std::size_t pairs = 0;
  std::vector<double> loss_history;
  std::filesystem::path parameter_file;
  std::filesystem::path loss_file;
};

/// Stages up to merging over the training images, pseudo-label mining,
/// training, then regressor.pcrg and loss.csv in config.output. Throws
/// StageError (and writes nothing) when no pseudo labels are found.
TrainingOutcome train_regressor(const PipelineConfig& config);

struct AblationRow {
  std::string name;
  std::vector<double> recall50;  // at kAblationBudgets
  double seconds_per_image = 0.0;
};

inline constexpr std::array<std::size_t, 4> kAblationBudgets = {1, 10, 30, 50};

struct AblationTable {
  std::vector<AblationRow> rows;
};

/// Evaluates the cumulative stage prefixes enabled in the config. Needs
/// ground truth.
AblationTable ablate(const PipelineConfig& config);
std::string format_table(const AblationTable& table);
nlohmann::ordered_json to_json(const AblationTable& table);

/// Entropy statistics of every scored initial proposal against the ground
/// truth.
EntropyAnalysis analyze_entropy(const PipelineConfig& config, std::size_t bins = 50);
nlohmann::ordered_json to_json(const EntropyAnalysis& analysis);

/// Overlay of the first `top_k` proposals on the source image.
std::string overlay_svg(const std::filesystem::path& image_href, int width, int height,
                        std::span<const BBox> boxes, std::size_t top_k);
/// Side-by-side histogram of correct and incorrect entropies.
std::string histogram_svg(const EntropyAnalysis& analysis);

}  // namespace pclip
