// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pclip/embeddings.hpp"
#include "pclip/geometry.hpp"
#include "pclip/image.hpp"
#include "pclip/kernels.hpp"

namespace pclip {

inline constexpr std::size_t kDefaultProposalBudget = 300;

struct InitialProposal {
  BBox box;
  double score = 0.0;  // SL, finite and >= 0
};

/// One line of the proposal JSON-lines format. The optional fields are
/// present once proposals have been scored.
struct ProposalRecord {
  std::string image_id;
  BBox box;
  double score = 0.0;
  std::optional<double> entropy;
  std::optional<double> objectness;
  std::optional<std::string> argmax_category;
  std::optional<std::string> provenance;
  std::size_t line = 0;  // 1-based source line when read from a file
};

/// Parses every record of a proposal file. Throws FormatError naming the
/// 1-based line of the first malformed record (bad JSON, missing field,
/// x1 <= x0 or y1 <= y0, negative or non-finite score).
std::vector<ProposalRecord> read_proposal_records(const std::filesystem::path& path);
std::vector<ProposalRecord> read_proposal_records(std::istream& in, const std::string& name);

void write_proposal_records(std::ostream& out, const std::vector<ProposalRecord>& records);
void write_proposal_records(const std::filesystem::path& path,
                            const std::vector<ProposalRecord>& records);

/// Records for `image_id` from a proposal file, clamped to the image when
/// its size is known (image_w, image_h > 0), sorted by descending score
/// (stable) and truncated to `budget`. Unknown ids yield an empty list.
std::vector<InitialProposal> load_proposals(const std::filesystem::path& path,
                                            const std::string& image_id,
                                            std::size_t budget = kDefaultProposalBudget,
                                            int image_w = 0, int image_h = 0);

/// Same selection rule applied to already-parsed records.
std::vector<InitialProposal> select_initial(const std::vector<ProposalRecord>& records,
                                            const std::string& image_id, std::size_t budget,
                                            int image_w, int image_h);

/// Knobs of the built-in sliding-window generator.
struct BuiltinGeneratorConfig {
  std::vector<double> scales = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> aspects = {0.5, 1.0, 2.0};
  /// Window stride as a fraction of the window side.
  double stride_fraction = 1.0 / 8.0;
  /// Interior margin as a fraction of the shorter window side.
  double margin_fraction = 1.0 / 16.0;
  /// Windows overlapping an already kept window above this IoU are dropped.
  double dedup_iou = 0.98;
  /// Use the OpenMP kernels (false selects the serial reference).
  bool parallel = true;
};

/// Simple edge-density generator standing in for Edge Boxes: Sobel magnitude,
/// sliding windows over a scale/aspect pyramid, scored by interior edge mass
/// minus edge mass in the border band, divided by the perimeter. Returns at
/// most `budget` boxes sorted by descending score. Throws InvalidInput for
/// images smaller than 16x16.
std::vector<InitialProposal> generate_builtin(const Image& image, std::size_t budget,
                                              const BuiltinGeneratorConfig& config = {});

/// Enumerates the generator's windows for a width x height image.
std::vector<kernels::Window> builtin_windows(int width, int height,
                                             const BuiltinGeneratorConfig& config);

class ProposalSource {
 public:
  virtual ~ProposalSource() = default;
  virtual std::size_t budget() const = 0;
  /// At most budget() proposals, sorted by descending score.
  virtual std::vector<InitialProposal> proposals(const ImageRef& image) = 0;
};

class FileProposalSource final : public ProposalSource {
 public:
  FileProposalSource(const std::filesystem::path& path, std::size_t budget);

  std::size_t budget() const override { return budget_; }
  std::vector<InitialProposal> proposals(const ImageRef& image) override;

  /// Image ids present in the file, sorted.
  std::vector<std::string> image_ids() const;

 private:
  std::size_t budget_;
  std::map<std::string, std::vector<ProposalRecord>> by_image_;
};

class BuiltinProposalSource final : public ProposalSource {
 public:
  explicit BuiltinProposalSource(std::size_t budget, BuiltinGeneratorConfig config = {})
      : budget_(budget), config_(std::move(config)) {}

  std::size_t budget() const override { return budget_; }
  std::vector<InitialProposal> proposals(const ImageRef& image) override;

 private:
  std::size_t budget_;
  BuiltinGeneratorConfig config_;
};

}  // namespace pclip
