// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Every pipeline subcommand reads one JSON config and
// applies flag overrides on top of it.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "pclip/error.hpp"
#include "pclip/evaluation.hpp"
#include "pclip/log.hpp"
#include "pclip/pipeline.hpp"
#include "pclip/synthetic_dataset.hpp"

namespace fs = std::filesystem;
using namespace pclip;

namespace {

struct Overrides {
  std::string config;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> top_k;
  std::optional<bool> selection;
  std::optional<bool> merging;
  std::optional<bool> regression;
  std::optional<std::string> regressor;
  bool overlays = false;
};

void add_common(CLI::App* cmd, Overrides& o, bool toggles) {
  cmd->add_option("--config", o.config, "JSON config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--workers", o.workers, "image worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--top-k", o.top_k, "proposals kept per image in proposals.jsonl (0 = all)");
  if (toggles) {
    cmd->add_flag("--selection,!--no-selection", o.selection, "toggle proposal selection");
    cmd->add_flag("--merging,!--no-merging", o.merging, "toggle graph-based merging");
    cmd->add_flag("--regression,!--no-regression", o.regression, "toggle box regression");
  }
}

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c = PipelineConfig::load(o.config);
  if (o.workers) c.workers = *o.workers;
  if (o.seed) {
    c.seed = *o.seed;
    c.training.seed = *o.seed;
  }
  if (o.out) c.output = *o.out;
  if (o.top_k) c.top_k = *o.top_k;
  if (o.selection) c.stages.selection = *o.selection;
  if (o.merging) c.stages.merging = *o.merging;
  if (o.regression) c.stages.regression = *o.regression;
  if (o.regressor) c.regressor = *o.regressor;
  if (o.overlays) c.overlays = true;
  return c;
}

void report_run(const RunResult& r) {
  std::size_t total = 0;
  for (const auto& im : r.images) {
    const auto* f = im.final_scored();
    total += f ? f->size() : im.initial.size();
  }
  std::printf("%zu images, %zu proposals\n", r.images.size(), total);
  for (const auto& t : r.stages) std::printf("  %-18s %.3f s\n", t.name.c_str(), t.seconds);
  if (r.metrics) std::cout << format_table(*r.metrics);
  if (!r.outputs.empty()) {
    std::printf("wrote %zu files to %s\n", r.outputs.size(),
                r.outputs.front().parent_path().string().c_str());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

int eval_file(const std::string& proposals, const std::string& gt_path,
              const std::optional<std::string>& vocab, const std::optional<std::string>& out) {
  const auto records = read_proposal_records(proposals);
  const GroundTruth gt = load_ground_truth(gt_path);
  RankedProposals ranked;
  DetectionsByImage dets;
  bool labeled = true;
  for (const auto& r : records) {
    ranked[r.image_id].push_back(r.box);
    if (r.argmax_category && r.objectness) {
      dets[r.image_id].push_back({r.box, *r.objectness, *r.argmax_category});
    } else {
      labeled = false;
    }
  }
  MetricReport report = evaluate_proposals(ranked, gt);
  if (labeled && !records.empty() && gt.box_count() > 0) {
    std::vector<std::string> names = gt.categories;
    if (vocab) names = load_vocabulary(*vocab).names();
    report.ap = detect_and_ap(dets, gt, names);
  }
  std::cout << format_table(report);
  if (out) write_text(*out, to_json(report).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pclip: CLIP-guided object proposal toolkit"};
  app.set_version_flag("--version", std::string(kToolkitVersion));
  app.require_subcommand(1);

  Overrides o;
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log informational messages");

  auto* generate = app.add_subcommand("generate", "initial proposals only");
  auto* select = app.add_subcommand("select", "initial proposals and entropy-based selection");
  auto* merge = app.add_subcommand("merge", "selection followed by graph-based merging");
  auto* refine = app.add_subcommand("refine", "selection, merging and box regression");
  auto* run_cmd = app.add_subcommand("run", "the stages enabled in the config");
  auto* train_cmd = app.add_subcommand("train-regressor", "mine pseudo labels and train the regressor");
  auto* ablate_cmd = app.add_subcommand("ablate", "recall per cumulative stage");
  auto* entropy_cmd = app.add_subcommand("analyze-entropy", "entropy of correct vs incorrect proposals");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a proposal file against ground truth");
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic demo dataset");

  for (auto* cmd : {generate, select, merge, refine, train_cmd, entropy_cmd}) add_common(cmd, o, false);
  for (auto* cmd : {run_cmd, ablate_cmd}) add_common(cmd, o, true);
  for (auto* cmd : {generate, select, merge, refine, run_cmd}) {
    cmd->add_flag("--overlays", o.overlays, "write SVG overlays of the top proposals");
  }
  refine->add_option("--regressor", o.regressor, "PCRG parameter file");
  run_cmd->add_option("--regressor", o.regressor, "PCRG parameter file");

  std::string eval_proposals, eval_gt;
  std::optional<std::string> eval_vocab, eval_out;
  eval_cmd->add_option("--proposals", eval_proposals, "proposal JSON lines")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--gt", eval_gt, "ground truth (COCO JSON or JSON lines)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--vocab", eval_vocab, "vocabulary for the in-vocabulary flag");
  eval_cmd->add_option("--out", eval_out, "write the report as JSON");

  std::string synth_out;
  SyntheticDatasetOptions synth;
  synth_cmd->add_option("--out", synth_out, "dataset directory")->required();
  synth_cmd->add_option("--images", synth.images, "number of images");
  synth_cmd->add_option("--seed", synth.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfigError);
  }
  if (verbose) {
    set_log_sink([](LogLevel level, std::string_view msg) {
      std::cerr << "pclip: " << to_string(level) << ": " << msg << '\n';
    });
  }

  try {
    if (eval_cmd->parsed()) return eval_file(eval_proposals, eval_gt, eval_vocab, eval_out);
    if (synth_cmd->parsed()) {
      const auto files = write_synthetic_dataset(synth_out, synth);
      std::printf("wrote %zu images; config at %s\n", synth.images, files.config.string().c_str());
      return 0;
    }

    PipelineConfig c = resolve(o);
    if (generate->parsed()) c.stages = {false, false, false};
    if (select->parsed()) c.stages = {true, false, false};
    if (merge->parsed()) c.stages = {true, true, false};
    if (refine->parsed()) c.stages = {true, true, true};

    if (train_cmd->parsed()) {
      const auto t = train_regressor(c);
      std::printf("%zu pseudo labels from %zu proposals, %zu training pairs\n", t.labels.size(),
                  t.pool_size, t.pairs);
      if (!t.loss_history.empty()) {
        std::printf("loss %.6g -> %.6g over %zu epochs\n", t.loss_history.front(),
                    t.loss_history.back(), t.loss_history.size());
      }
      std::printf("wrote %s and %s\n", t.parameter_file.string().c_str(),
                  t.loss_file.string().c_str());
    } else if (ablate_cmd->parsed()) {
      const auto table = ablate(c);
      std::cout << format_table(table);
      write_text(c.output / "ablation.json", to_json(table).dump(2) + "\n");
    } else if (entropy_cmd->parsed()) {
      const auto a = analyze_entropy(c);
      std::printf("correct:   %zu proposals, mean entropy %s\n", a.correct_count,
                  a.mean_correct ? std::to_string(*a.mean_correct).c_str() : "n/a");
      std::printf("incorrect: %zu proposals, mean entropy %s\n", a.incorrect_count,
                  a.mean_incorrect ? std::to_string(*a.mean_incorrect).c_str() : "n/a");
      write_text(c.output / "entropy.json", to_json(a).dump(2) + "\n");
      write_text(c.output / "entropy_histogram.svg", histogram_svg(a));
    } else {
      report_run(run(c));
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "pclip: config error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kConfigError);
  } catch (const FormatError& e) {
    std::cerr << "pclip: format error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kFormatError);
  } catch (const std::exception& e) {
    std::cerr << "pclip: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kStageFailure);
  }
}
