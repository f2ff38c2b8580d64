// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/synthetic_dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "pclip/embeddings.hpp"
#include "pclip/error.hpp"

namespace pclip {
namespace {

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return lo + (hi - lo) * double(rng_() >> 11) * 0x1.0p-53; }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::mt19937_64 rng_;
};

bool overlaps(const BBox& a, const BBox& b, double gap) {
  return a.x_min - gap < b.x_max && b.x_min - gap < a.x_max && a.y_min - gap < b.y_max &&
         b.y_min - gap < a.y_max;
}

}  // namespace

std::vector<SyntheticImage> make_synthetic_images(const SyntheticDatasetOptions& o) {
  if (o.categories.empty()) throw InvalidInput("synthetic dataset needs categories");
  if (o.min_objects > o.max_objects || o.min_side < 8 || o.min_side > o.max_side ||
      o.max_side + 8 > std::min(o.width, o.height)) {
    throw InvalidInput("inconsistent synthetic dataset options");
  }
  std::vector<Rgb> colors;
  for (const auto& name : o.categories) {
    const auto c = SyntheticProvider::color(name);
    if (!c) throw InvalidInput("'" + name + "' is not a synthetic palette color");
    colors.push_back(*c);
  }
  const Rgb background = *SyntheticProvider::color("gray");

  Draw draw(o.seed);
  std::vector<SyntheticImage> out;
  for (std::size_t n = 0; n < o.images; ++n) {
    SyntheticImage im;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", n);
    im.id = id;
    im.pixels = Image(o.width, o.height, background);

    const auto target =
        static_cast<std::size_t>(draw.integer(int(o.min_objects), int(o.max_objects)));
    for (int attempt = 0; attempt < 200 && im.objects.size() < target; ++attempt) {
      const int w = draw.integer(o.min_side, o.max_side);
      const int h = draw.integer(o.min_side, o.max_side);
      const int x = draw.integer(2, o.width - w - 2);
      const int y = draw.integer(2, o.height - h - 2);
      const BBox box{double(x), double(y), double(x + w), double(y + h)};
      const bool clear = std::none_of(im.objects.begin(), im.objects.end(),
                                      [&](const auto& g) { return overlaps(box, g.box, 6.0); });
      if (!clear) continue;
      const auto c = static_cast<std::size_t>(draw.integer(0, int(colors.size()) - 1));
      im.pixels.fill_rect(x, y, x + w, y + h, colors[c]);
      im.objects.push_back({box, o.categories[c]});
    }

    for (const auto& g : im.objects) {
      const BBox& b = g.box;
      const double w = b.width(), h = b.height();
      for (std::size_t k = 0; k < o.aligned_per_object; ++k) {
        const double j = o.aligned_jitter;
        BBox p{b.x_min + draw.uniform(-j, j) * w, b.y_min + draw.uniform(-j, j) * h,
               b.x_max + draw.uniform(-j, j) * w, b.y_max + draw.uniform(-j, j) * h};
        p = clamp_to_image(p, o.width, o.height);
        im.proposals.push_back({p, draw.uniform(o.object_score_min, o.object_score_max)});
      }
      if (o.fragments) {
        im.proposals.push_back({{b.x_min, b.y_min, b.x_min + 0.8 * w, b.y_max},
                                draw.uniform(o.object_score_min, o.object_score_max)});
        im.proposals.push_back({{b.x_max - 0.8 * w, b.y_min, b.x_max, b.y_max},
                                draw.uniform(o.object_score_min, o.object_score_max)});
      }
    }

    std::size_t placed = 0;
    for (int attempt = 0; attempt < 2000 && placed < o.background_boxes; ++attempt) {
      const int w = draw.integer(8, std::max(8, o.width / 3));
      const int h = draw.integer(8, std::max(8, o.height / 3));
      const int x = draw.integer(0, o.width - w);
      const int y = draw.integer(0, o.height - h);
      const BBox box{double(x), double(y), double(x + w), double(y + h)};
      // Crops round outward to whole pixels, so keep a margin from objects.
      const bool clear = std::none_of(im.objects.begin(), im.objects.end(),
                                      [&](const auto& g) { return overlaps(box, g.box, 2.0); });
      if (!clear) continue;
      im.proposals.push_back({box, draw.uniform(o.background_score_min, o.background_score_max)});
      ++placed;
    }
    out.push_back(std::move(im));
  }
  return out;
}

SyntheticDatasetFiles write_synthetic_dataset(const std::filesystem::path& dir,
                                              const SyntheticDatasetOptions& options) {
  namespace fs = std::filesystem;
  SyntheticDatasetFiles f;
  f.images = dir / "images";
  f.proposals = dir / "proposals.jsonl";
  f.ground_truth = dir / "gt.jsonl";
  f.vocabulary = dir / "vocab.txt";
  f.config = dir / "config.json";
  fs::create_directories(f.images);

  const auto images = make_synthetic_images(options);
  std::vector<ProposalRecord> records;
  std::ofstream gt(f.ground_truth);
  for (const auto& im : images) {
    save_ppm(im.pixels, f.images / (im.id + ".ppm"));
    for (const auto& p : im.proposals) {
      ProposalRecord r;
      r.image_id = im.id;
      r.box = p.box;
      r.score = p.score;
      records.push_back(std::move(r));
    }
    if (im.objects.empty()) gt << nlohmann::ordered_json{{"image_id", im.id}}.dump() << '\n';
    for (const auto& g : im.objects) {
      gt << nlohmann::ordered_json{{"image_id", im.id},
                                   {"x0", g.box.x_min},
                                   {"y0", g.box.y_min},
                                   {"x1", g.box.x_max},
                                   {"y1", g.box.y_max},
                                   {"category", g.category}}
                .dump()
         << '\n';
    }
  }
  if (!gt) throw Error("cannot write " + f.ground_truth.string());
  write_proposal_records(f.proposals, records);

  std::ofstream vocab(f.vocabulary);
  for (const auto& c : options.categories) vocab << c << '\n';
  if (!vocab) throw Error("cannot write " + f.vocabulary.string());

  nlohmann::ordered_json config{
      {"images", "images"},
      {"proposals", "proposals.jsonl"},
      {"backend", "synthetic"},
      {"vocabulary", "vocab.txt"},
      {"ground_truth", "gt.jsonl"},
      {"output", "out"},
      {"seed", options.seed},
      {"stages", {{"selection", true}, {"merging", true}, {"regression", false}}}};
  std::ofstream cfg(f.config);
  cfg << config.dump(2) << '\n';
  if (!cfg) throw Error("cannot write " + f.config.string());
  return f;
}

}  // namespace pclip
