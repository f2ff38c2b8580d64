// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pclip/evaluation.hpp"
#include "pclip/image.hpp"
#include "pclip/initial_proposals.hpp"

namespace pclip {

/// Flat-colored rectangles on a gray background, paired with a proposal list
/// whose initial scores favor background boxes. Object colors are palette
/// names of the synthetic backend, so object crops embed to one category and
/// pure background crops to none.
struct SyntheticDatasetOptions {
  std::size_t images = 10;
  int width = 160;
  int height = 120;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  int min_side = 24;
  int max_side = 48;
  std::vector<std::string> categories = {"red", "green", "blue", "yellow", "cyan", "magenta"};

  std::size_t aligned_per_object = 3;  // jittered copies of each object box
  double aligned_jitter = 0.06;        // max shift per side, fraction of the side
  bool fragments = true;               // left and right 80% slices of each object
  std::size_t background_boxes = 25;   // pure background crops
  double object_score_min = 0.05;
  double object_score_max = 0.3;
  double background_score_min = 0.5;
  double background_score_max = 0.95;
  std::uint64_t seed = 0;
};

struct SyntheticImage {
  std::string id;
  Image pixels;
  std::vector<GroundTruthBox> objects;
  std::vector<InitialProposal> proposals;  // unsorted
};

std::vector<SyntheticImage> make_synthetic_images(const SyntheticDatasetOptions& options);

struct SyntheticDatasetFiles {
  std::filesystem::path images;       // directory of PPM files
  std::filesystem::path proposals;    // proposals.jsonl
  std::filesystem::path ground_truth; // gt.jsonl
  std::filesystem::path vocabulary;   // vocab.txt
  std::filesystem::path config;       // config.json for the synthetic backend
};

/// Writes the dataset plus a ready-to-run config under `dir`.
SyntheticDatasetFiles write_synthetic_dataset(const std::filesystem::path& dir,
                                              const SyntheticDatasetOptions& options);

}  // namespace pclip
