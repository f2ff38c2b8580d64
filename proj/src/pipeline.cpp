// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "pclip/error.hpp"
#include "pclip/kernels.hpp"
#include "pclip/log.hpp"

namespace pclip {
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

namespace {

/// Reads one JSON object, tracking which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& obj, std::string prefix, fs::path base)
      : obj_(obj), prefix_(std::move(prefix)), base_(std::move(base)) {
    if (!obj_.is_object()) throw ConfigError("config " + where() + " must be a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!take(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + name(key) + "' has the wrong type");
    }
  }

  void path(const char* key, fs::path& out) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    fs::path p(s);
    out = p.is_relative() && !base_.empty() ? base_ / p : p;
  }

  template <class Fn>
  void object(const char* key, Fn&& fn) {
    if (!take(key)) return;
    ObjectReader inner(obj_.at(key), name(key), base_);
    fn(inner);
    inner.finish();
  }

  template <class Enum>
  void choice(const char* key, Enum& out,
              std::initializer_list<std::pair<const char*, Enum>> options) {
    std::string s;
    if (!take(key)) return;
    get_taken(key, s);
    for (const auto& [label, value] : options) {
      if (s == label) {
        out = value;
        return;
      }
    }
    std::string allowed;
    for (const auto& [label, value] : options) allowed += std::string(allowed.empty() ? "" : ", ") + label;
    throw ConfigError("config key '" + name(key) + "' must be one of: " + allowed);
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + name(key.c_str()) + "'");
    }
  }

 private:
  bool take(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }
  void get_taken(const char* key, std::string& out) {
    try {
      out = obj_.at(key).get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + name(key) + "' has the wrong type");
    }
  }
  std::string name(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  std::string where() const { return prefix_.empty() ? "root" : "'" + prefix_ + "'"; }

  const nlohmann::json& obj_;
  std::string prefix_;
  fs::path base_;
  std::set<std::string> seen_;
};

const char* backend_name(BackendKind b) {
  switch (b) {
    case BackendKind::kSynthetic: return "synthetic";
    case BackendKind::kPrecomputed: return "precomputed";
    case BackendKind::kOnnx: return "onnx";
  }
  return "synthetic";
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  PipelineConfig c;
  ObjectReader r(doc, "", base_dir);
  r.path("images", c.images);
  if (doc.is_object() && doc.contains("proposals") && doc["proposals"] == "builtin") {
    c.builtin_proposals = true;
    std::string ignored;
    r.get("proposals", ignored);
  } else {
    r.path("proposals", c.proposals);
  }
  r.choice("backend", c.backend,
           {{"synthetic", BackendKind::kSynthetic},
            {"precomputed", BackendKind::kPrecomputed},
            {"onnx", BackendKind::kOnnx}});
  r.path("embeddings", c.embeddings);
  r.path("image_model", c.image_model);
  r.path("text_vectors", c.text_vectors);
  r.path("vocabulary", c.vocabulary);
  r.get("prompt_template", c.prompt_template);
  r.path("ground_truth", c.ground_truth);
  r.path("regressor", c.regressor);
  r.path("training_images", c.training_images);
  r.path("training_proposals", c.training_proposals);
  r.path("output", c.output);
  r.get("seed", c.seed);
  r.get("workers", c.workers);
  r.get("budget", c.budget);
  r.get("top_k", c.top_k);
  r.object("stages", [&](ObjectReader& s) {
    s.get("selection", c.stages.selection);
    s.get("merging", c.stages.merging);
    s.get("regression", c.stages.regression);
  });
  r.object("selection", [&](ObjectReader& s) {
    s.get("retain_fraction", c.selection.retain_fraction);
    s.get("lambda_sim", c.selection.lambda_sim);
    s.get("lambda_sl", c.selection.lambda_sl);
    s.get("temperature", c.selection.temperature);
    s.choice("max_similarity", c.selection.max_similarity,
             {{"softmax", MaxSimilaritySource::kPostSoftmax},
              {"cosine", MaxSimilaritySource::kCosine}});
  });
  r.object("merging", [&](ObjectReader& s) {
    s.get("iou_threshold", c.merging.thr_iou);
    s.get("psim_threshold", c.merging.thr_psim);
  });
  r.object("training", [&](ObjectReader& s) {
    s.get("epochs", c.training.epochs);
    s.get("learning_rate", c.training.learning_rate);
    s.get("batch_size", c.training.batch_size);
    std::vector<std::size_t> hidden;
    s.get("hidden", hidden);
    if (!hidden.empty()) {
      if (hidden.size() != 2) throw ConfigError("config key 'training.hidden' needs two sizes");
      c.training.hidden1 = hidden[0];
      c.training.hidden2 = hidden[1];
    }
    s.choice("optimizer", c.training.optimizer,
             {{"adam", OptimizerKind::kAdam}, {"sgd", OptimizerKind::kSgd}});
    s.get("jitters", c.training.jitters);
    s.get("jitter_shift", c.training.jitter_shift);
    s.get("jitter_scale_min", c.training.jitter_scale_min);
    s.get("jitter_scale_max", c.training.jitter_scale_max);
    s.get("p_entropy", c.pseudo_entropy_fraction);
    s.get("p_score", c.pseudo_score_fraction);
  });
  r.object("builtin", [&](ObjectReader& s) {
    s.get("scales", c.builtin.scales);
    s.get("aspects", c.builtin.aspects);
    s.get("stride_fraction", c.builtin.stride_fraction);
    s.get("margin_fraction", c.builtin.margin_fraction);
    s.get("dedup_iou", c.builtin.dedup_iou);
  });
  r.object("synthetic", [&](ObjectReader& s) {
    s.get("dim", c.synthetic.dim);
    s.get("noise", c.synthetic.noise);
  });
  r.object("evaluation", [&](ObjectReader& s) {
    s.choice("detection_score", c.detection_score,
             {{"objectness", DetectionScore::kObjectness},
              {"max_similarity", DetectionScore::kMaxSimilarity}});
    s.get("nms_threshold", c.nms_threshold);
  });
  r.object("overlays", [&](ObjectReader& s) {
    s.get("enabled", c.overlays);
    s.get("top_k", c.overlay_top_k);
  });
  r.finish();
  c.training.seed = c.seed;
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc, path.parent_path());
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  const auto str = [](const fs::path& p) { return p.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(p.string()); };
  nlohmann::ordered_json j;
  j["images"] = str(images);
  j["proposals"] = builtin_proposals ? nlohmann::ordered_json("builtin") : str(proposals);
  j["backend"] = backend_name(backend);
  j["embeddings"] = str(embeddings);
  j["image_model"] = str(image_model);
  j["text_vectors"] = str(text_vectors);
  j["vocabulary"] = str(vocabulary);
  j["prompt_template"] = prompt_template;
  j["ground_truth"] = str(ground_truth);
  j["regressor"] = str(regressor);
  j["training_images"] = str(training_images);
  j["training_proposals"] = str(training_proposals);
  j["output"] = output.string();
  j["seed"] = seed;
  j["workers"] = workers;
  j["budget"] = budget;
  j["top_k"] = top_k;
  j["stages"] = {{"selection", stages.selection},
                 {"merging", stages.merging},
                 {"regression", stages.regression}};
  j["selection"] = {
      {"retain_fraction", selection.retain_fraction},
      {"lambda_sim", selection.lambda_sim},
      {"lambda_sl", selection.lambda_sl},
      {"temperature", selection.temperature},
      {"max_similarity",
       selection.max_similarity == MaxSimilaritySource::kPostSoftmax ? "softmax" : "cosine"}};
  j["merging"] = {{"iou_threshold", merging.thr_iou}, {"psim_threshold", merging.thr_psim}};
  j["training"] = {{"epochs", training.epochs},
                   {"learning_rate", training.learning_rate},
                   {"batch_size", training.batch_size},
                   {"hidden", {training.hidden1, training.hidden2}},
                   {"optimizer", training.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
                   {"jitters", training.jitters},
                   {"jitter_shift", training.jitter_shift},
                   {"jitter_scale_min", training.jitter_scale_min},
                   {"jitter_scale_max", training.jitter_scale_max},
                   {"p_entropy", pseudo_entropy_fraction},
                   {"p_score", pseudo_score_fraction}};
  j["builtin"] = {{"scales", builtin.scales},
                  {"aspects", builtin.aspects},
                  {"stride_fraction", builtin.stride_fraction},
                  {"margin_fraction", builtin.margin_fraction},
                  {"dedup_iou", builtin.dedup_iou}};
  j["synthetic"] = {{"dim", synthetic.dim}, {"noise", synthetic.noise}};
  j["evaluation"] = {
      {"detection_score",
       detection_score == DetectionScore::kObjectness ? "objectness" : "max_similarity"},
      {"nms_threshold", nms_threshold}};
  j["overlays"] = {{"enabled", overlays}, {"top_k", overlay_top_k}};
  return j;
}

void PipelineConfig::validate() const {
  if (stages.merging && !stages.selection) {
    throw ConfigError("the merging stage needs the selection stage");
  }
  if (stages.regression && !stages.selection) {
    throw ConfigError("the regression stage needs the selection stage");
  }
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (budget == 0) throw ConfigError("proposal budget must be positive");
  if (!(nms_threshold > 0.0 && nms_threshold < 1.0)) {
    throw ConfigError("nms_threshold must lie in (0, 1)");
  }
  selection.validate();
  merging.validate();
  training.validate();
  for (double p : {pseudo_entropy_fraction, pseudo_score_fraction}) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("pseudo-label fractions must lie in (0, 1]");
  }

  const auto must_exist = [](const fs::path& p, const char* what) {
    if (!p.empty() && !fs::exists(p)) {
      throw ConfigError(std::string(what) + " not found: " + p.string());
    }
  };
  if (images.empty() && (builtin_proposals || backend != BackendKind::kPrecomputed)) {
    throw ConfigError("config needs an image directory");
  }
  if (!images.empty() && !fs::is_directory(images)) {
    throw ConfigError("image directory not found: " + images.string());
  }
  if (!builtin_proposals) {
    if (proposals.empty()) throw ConfigError("config needs a proposal file or \"builtin\"");
    must_exist(proposals, "proposal file");
  }
  must_exist(vocabulary, "vocabulary");
  must_exist(ground_truth, "ground truth");
  must_exist(training_images, "training image directory");
  must_exist(training_proposals, "training proposal file");
  if (stages.selection && vocabulary.empty()) {
    throw ConfigError("the selection stage needs a vocabulary file");
  }
  if (stages.regression) {
    if (regressor.empty()) throw ConfigError("the regression stage needs a regressor file");
    must_exist(regressor, "regressor file");
  }
  if (backend == BackendKind::kPrecomputed) {
    if (embeddings.empty()) throw ConfigError("the precomputed backend needs an embeddings file");
    must_exist(embeddings, "embeddings file");
  }
  if (backend == BackendKind::kOnnx && image_model.empty()) {
    throw ConfigError("the onnx backend needs an image_model");
  }
}

// ---------------------------------------------------------------------------

std::shared_ptr<EmbeddingProvider> make_provider(const PipelineConfig& config) {
  std::shared_ptr<EmbeddingProvider> inner;
  switch (config.backend) {
    case BackendKind::kSynthetic:
      inner = std::make_shared<SyntheticProvider>(config.synthetic);
      break;
    case BackendKind::kPrecomputed:
      inner = PrecomputedProvider::from_file(config.embeddings);
      break;
    case BackendKind::kOnnx: {
      OnnxProvider::Options o;
      o.image_model = config.image_model;
      o.text_vectors = config.text_vectors;
      if (const char* dir = std::getenv(kModelDirEnv); dir && *dir) {
        for (fs::path* p : {&o.image_model, &o.text_vectors}) {
          if (!p->empty()) *p = fs::path(dir) / p->filename();
        }
      }
      inner = std::make_shared<OnnxProvider>(o);
      break;
    }
  }
  return std::make_shared<SerializedProvider>(std::move(inner));
}

std::vector<std::pair<std::string, fs::path>> list_images(const fs::path& dir) {
  static const std::set<std::string> native = {".ppm", ".pgm", ".pnm"};
  static const std::set<std::string> decoded = {".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff"};
  std::vector<std::pair<std::string, fs::path>> out;
  if (!fs::is_directory(dir)) throw ConfigError("image directory not found: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
#ifdef PCLIP_WITH_OPENCV
    const bool readable = native.count(ext) || decoded.count(ext);
#else
    const bool readable = native.count(ext) > 0;
    (void)decoded;
#endif
    if (readable) out.emplace_back(entry.path().stem().string(), entry.path());
  }
  std::sort(out.begin(), out.end());
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].first == out[i - 1].first) {
      throw ConfigError("two images share the id '" + out[i].first + "'");
    }
  }
  return out;
}

const std::vector<ScoredProposal>* ImageOutcome::final_scored() const noexcept {
  if (refined) return &*refined;
  if (merged) return &*merged;
  if (selected) return &*selected;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Processing

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Shared {
  const PipelineConfig* config = nullptr;
  ProposalSource* source = nullptr;
  EmbeddingProvider* provider = nullptr;
  std::vector<EmbeddingVector> texts;
  std::size_t categories = 0;
  std::optional<RegressorParams> regressor;
};

struct WorkItem {
  std::string id;
  fs::path path;  // empty when the backend works without pixels
};

ImageOutcome process_image(const Shared& s, const WorkItem& item) {
  const PipelineConfig& config = *s.config;
  ImageOutcome out;
  out.image_id = item.id;
  const char* stage = kStageInitial;
  try {
    auto t0 = Clock::now();
    Image pixels;
    if (!item.path.empty()) pixels = load_image(item.path);
    const ImageRef ref{item.id, item.path.empty() ? nullptr : &pixels};
    out.width = ref.width();
    out.height = ref.height();
    out.initial = s.source->proposals(ref);
    out.seconds[kStageInitial] = since(t0);

    if (!config.stages.selection) return out;
    stage = kStageSelection;
    t0 = Clock::now();
    SelectionResult sel;
    if (!out.initial.empty()) {
      auto scored = score_proposals(*s.provider, ref, out.initial, s.texts,
                                    config.selection.temperature);
      sel = select_proposals(std::move(scored), s.categories, config.selection);
    }
    out.selected = sel.selected;
    out.seconds[kStageSelection] = since(t0);

    if (config.stages.merging) {
      stage = kStageMerging;
      t0 = Clock::now();
      if (!sel.selected.empty()) {
        MergeContext ctx{s.provider,          ref, s.texts, config.selection, sel.normalizer,
                         sel.max_entropy};
        merge_proposals(sel, config.merging, ctx);
      }
      out.merged = sel.selected;
      out.seconds[kStageMerging] = since(t0);
    }

    if (config.stages.regression) {
      stage = kStageRegression;
      t0 = Clock::now();
      const auto& current = *out.final_scored();
      if (!current.empty()) {
        if (!ref.pixels && (out.width <= 0 || out.height <= 0)) {
          throw InvalidInput("refinement needs the image size");
        }
        RefinementContext ctx{s.provider, ref, s.provider->embed_image(ref), s.texts,
                              config.selection, sel.normalizer};
        out.refined = refine_proposals(*s.regressor, current, ctx);
      } else {
        out.refined = current;
      }
      out.seconds[kStageRegression] = since(t0);
    }
    return out;
  } catch (const FormatError& e) {
    throw FormatError(std::string("stage '") + stage + "', image " + item.id + ": " + e.what());
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, "image " + item.id + ": " + e.what());
  }
}

std::vector<WorkItem> work_items(const PipelineConfig& config, const FileProposalSource* file) {
  std::vector<WorkItem> items;
  if (!config.images.empty()) {
    for (auto& [id, path] : list_images(config.images)) items.push_back({id, path});
  } else if (file) {
    for (auto& id : file->image_ids()) items.push_back({id, {}});
  }
  return items;
}

template <class Fn>
std::vector<ImageOutcome> for_each_image(const std::vector<WorkItem>& items, int workers, Fn&& fn) {
  std::vector<ImageOutcome> out(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  const kernels::ThreadScope threads(workers);
  const auto n = static_cast<std::ptrdiff_t>(items.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = fn(items[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<std::string> stage_names(const PipelineConfig& config) {
  std::vector<std::string> names{kStageInitial};
  if (config.stages.selection) names.emplace_back(kStageSelection);
  if (config.stages.merging) names.emplace_back(kStageMerging);
  if (config.stages.regression) names.emplace_back(kStageRegression);
  return names;
}

}  // namespace

RunResult process(const PipelineConfig& config) {
  config.validate();
  Shared s;
  s.config = &config;

  std::unique_ptr<ProposalSource> source;
  const FileProposalSource* file = nullptr;
  try {
    if (config.builtin_proposals) {
      auto b = config.builtin;
      b.parallel = false;  // images already run in parallel
      source = std::make_unique<BuiltinProposalSource>(config.budget, b);
    } else {
      auto f = std::make_unique<FileProposalSource>(config.proposals, config.budget);
      file = f.get();
      source = std::move(f);
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kStageInitial, e.what());
  }
  s.source = source.get();

  RunResult result;
  std::shared_ptr<EmbeddingProvider> provider;
  if (config.stages.selection) {
    const auto vocab = load_vocabulary(config.vocabulary, config.prompt_template);
    result.categories = vocab.names();
    s.categories = vocab.size();
    try {
      provider = make_provider(config);
      s.texts = embed_texts(*provider, vocab);
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(kStageSelection, std::string("text embeddings: ") + e.what());
    }
    s.provider = provider.get();
  }
  if (config.stages.regression) s.regressor = load_regressor(config.regressor);

  const auto items = work_items(config, file);
  result.images = for_each_image(items, config.workers,
                                 [&](const WorkItem& item) { return process_image(s, item); });
  for (const auto& name : stage_names(config)) {
    StageTiming t{name, 0.0};
    for (const auto& im : result.images) {
      const auto it = im.seconds.find(name);
      if (it != im.seconds.end()) t.seconds += it->second;
    }
    result.stages.push_back(t);
  }
  return result;
}

RankedProposals ranked_boxes(const RunResult& result, const std::string& stage) {
  RankedProposals out;
  for (const auto& im : result.images) {
    auto& boxes = out[im.image_id];
    const std::vector<ScoredProposal>* scored = nullptr;
    if (stage == kStageInitial) {
      for (const auto& p : im.initial) boxes.push_back(p.box);
      continue;
    }
    if (stage == kStageSelection && im.selected) scored = &*im.selected;
    if (stage == kStageMerging && im.merged) scored = &*im.merged;
    if (stage == kStageRegression && im.refined) scored = &*im.refined;
    if (!scored) throw InvalidInput("stage '" + stage + "' did not run");
    for (const auto& p : *scored) boxes.push_back(p.box);
  }
  return out;
}

DetectionsByImage detections(const RunResult& result, const PipelineConfig& config) {
  DetectionsByImage out;
  for (const auto& im : result.images) {
    auto& dets = out[im.image_id];
    const auto* scored = im.final_scored();
    if (!scored) continue;
    for (const auto& p : *scored) {
      const double score = config.detection_score == DetectionScore::kObjectness
                               ? p.objectness.value_or(0.0)
                               : p.similarity.max_similarity;
      dets.push_back({p.box, score, result.categories.at(p.similarity.argmax)});
    }
  }
  return out;
}

std::vector<ProposalRecord> to_records(const std::string& image_id,
                                       std::span<const InitialProposal> proposals) {
  std::vector<ProposalRecord> out;
  for (const auto& p : proposals) {
    ProposalRecord r;
    r.image_id = image_id;
    r.box = p.box;
    r.score = p.score;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ProposalRecord> to_records(const std::string& image_id,
                                       std::span<const ScoredProposal> proposals,
                                       const std::vector<std::string>& categories) {
  std::vector<ProposalRecord> out;
  for (const auto& p : proposals) {
    ProposalRecord r;
    r.image_id = image_id;
    r.box = p.box;
    r.score = p.initial_score;
    r.entropy = p.entropy;
    r.objectness = p.objectness;
    if (p.similarity.argmax < categories.size()) {
      r.argmax_category = categories[p.similarity.argmax];
    }
    r.provenance = std::string(to_string(p.provenance));
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

/// Files written so far; removed again unless commit() is called.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove(*it, ec);
  }

  fs::path write(const fs::path& relative, const std::string& text) {
    const fs::path path = dir_ / relative;
    ensure_dir(path.parent_path());
    binary::write_file(path,
                       std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    written_.push_back(path);
    return path;
  }

  void commit() { committed_ = true; }
  const std::vector<fs::path>& written() const noexcept { return written_; }

 private:
  void ensure_dir(const fs::path& d) {
    if (d.empty() || fs::exists(d)) return;
    ensure_dir(d.parent_path());
    fs::create_directory(d);
    dirs_.push_back(d);
  }

  fs::path dir_;
  std::vector<fs::path> written_;
  std::vector<fs::path> dirs_;
  bool committed_ = false;
};

std::string jsonl(const std::vector<ProposalRecord>& records) {
  std::ostringstream s;
  write_proposal_records(s, records);
  return s.str();
}

template <class Get>
std::string stage_jsonl(const RunResult& r, Get&& get, std::size_t top_k = 0) {
  std::vector<ProposalRecord> all;
  for (const auto& im : r.images) {
    auto recs = get(im);
    if (top_k > 0 && recs.size() > top_k) recs.resize(top_k);
    all.insert(all.end(), recs.begin(), recs.end());
  }
  return jsonl(all);
}

}  // namespace

RunResult run(const PipelineConfig& config) {
  RunResult result = process(config);
  OutputSet out(config.output);

  const auto t_eval = Clock::now();
  std::optional<GroundTruth> gt;
  if (!config.ground_truth.empty()) {
    gt = load_ground_truth(config.ground_truth);
    const std::string final_stage = stage_names(config).back();
    result.metrics = evaluate_proposals(ranked_boxes(result, final_stage), *gt);
    if (config.stages.selection && gt->box_count() > 0) {
      auto by_image = detections(result, config);
      result.metrics->ap = detect_and_ap(by_image, *gt, result.categories, config.nms_threshold);
    }
  }
  const double eval_seconds = since(t_eval);

  out.write("initial.jsonl", stage_jsonl(result, [](const ImageOutcome& im) {
              return to_records(im.image_id, im.initial);
            }));
  const auto scored_file = [&](const char* name, auto member) {
    out.write(name, stage_jsonl(result, [&](const ImageOutcome& im) {
                return to_records(im.image_id, *(im.*member), result.categories);
              }));
  };
  if (config.stages.selection) scored_file("selected.jsonl", &ImageOutcome::selected);
  if (config.stages.merging) scored_file("merged.jsonl", &ImageOutcome::merged);
  if (config.stages.regression) scored_file("refined.jsonl", &ImageOutcome::refined);
  out.write("proposals.jsonl", stage_jsonl(
                                   result,
                                   [&](const ImageOutcome& im) {
                                     if (const auto* f = im.final_scored()) {
                                       return to_records(im.image_id, *f, result.categories);
                                     }
                                     return to_records(im.image_id, im.initial);
                                   },
                                   config.top_k));
  if (result.metrics) {
    out.write("metrics.json", to_json(*result.metrics).dump(2) + "\n");
    out.write("metrics.txt", format_table(*result.metrics));
  }
  if (config.overlays && !config.images.empty()) {
    const auto paths = list_images(config.images);
    std::map<std::string, fs::path> by_id(paths.begin(), paths.end());
    const fs::path overlay_dir = config.output / "overlays";
    for (const auto& im : result.images) {
      std::vector<BBox> boxes;
      if (const auto* f = im.final_scored()) {
        for (const auto& p : *f) boxes.push_back(p.box);
      } else {
        for (const auto& p : im.initial) boxes.push_back(p.box);
      }
      const fs::path href = fs::absolute(by_id.at(im.image_id))
                                .lexically_relative(fs::absolute(overlay_dir));
      out.write(fs::path("overlays") / (im.image_id + ".svg"),
                overlay_svg(href, im.width, im.height, boxes, config.overlay_top_k));
    }
  }

  nlohmann::ordered_json manifest;
  manifest["toolkit"] = {{"name", "pclip"}, {"version", kToolkitVersion}};
  manifest["config"] = config.to_json();
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  const double n_images = std::max<std::size_t>(result.images.size(), 1);
  for (const auto& t : result.stages) {
    stages.push_back(
        {{"name", t.name}, {"seconds", t.seconds}, {"seconds_per_image", t.seconds / n_images}});
  }
  manifest["stages"] = stages;
  if (result.metrics) manifest["evaluation_seconds"] = eval_seconds;
  nlohmann::ordered_json images = nlohmann::ordered_json::array();
  for (const auto& im : result.images) {
    nlohmann::ordered_json counts{{"initial", im.initial.size()}};
    if (im.selected) counts["selected"] = im.selected->size();
    if (im.merged) counts["merged"] = im.merged->size();
    if (im.refined) counts["refined"] = im.refined->size();
    images.push_back({{"image_id", im.image_id},
                      {"width", im.width},
                      {"height", im.height},
                      {"proposals", counts}});
  }
  manifest["images"] = images;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& p : out.written()) files.push_back(p.lexically_relative(config.output).string());
  files.push_back("manifest.json");
  manifest["outputs"] = files;
  out.write("manifest.json", manifest.dump(2) + "\n");

  out.commit();
  result.outputs = out.written();
  return result;
}

// ---------------------------------------------------------------------------

TrainingOutcome train_regressor(const PipelineConfig& config) {
  PipelineConfig c = config;
  c.stages.regression = false;
  if (!c.training_images.empty()) c.images = c.training_images;
  if (!c.training_proposals.empty()) c.proposals = c.training_proposals;
  if (!c.stages.selection) throw ConfigError("training the regressor needs the selection stage");
  const RunResult r = process(c);

  TrainingOutcome outcome;
  std::vector<PoolProposal> pool;
  for (const auto& im : r.images) {
    for (const auto& p : *im.final_scored()) {
      pool.push_back({im.image_id, p.box, p.entropy, p.initial_score});
    }
  }
  outcome.pool_size = pool.size();
  outcome.labels = mine_pseudo_labels(pool, c.pseudo_entropy_fraction, c.pseudo_score_fraction);
  if (outcome.labels.empty()) {
    throw StageError(kStageRegression,
                     "no pseudo labels: none of the " + std::to_string(pool.size()) +
                         " pooled proposals is both among the lowest-entropy and the "
                         "highest-scoring ones; raise training.p_entropy or training.p_score");
  }

  std::map<std::string, fs::path> paths;
  if (!c.images.empty()) {
    for (auto& [id, path] : list_images(c.images)) paths.emplace(id, path);
  }
  std::map<std::string, Image> pixels;
  ImageLookup lookup = [&](const std::string& id) {
    auto it = pixels.find(id);
    if (it == pixels.end()) {
      const auto p = paths.find(id);
      if (p == paths.end()) throw InvalidInput("no image file for " + id);
      it = pixels.emplace(id, load_image(p->second)).first;
    }
    return ImageRef{id, &it->second};
  };

  TrainConfig tc = c.training;
  tc.seed = c.seed;
  TrainResult trained;
  try {
    const auto provider = make_provider(c);
    const auto pairs = build_training_pairs(outcome.labels, *provider, lookup, tc);
    outcome.pairs = pairs.size();
    const kernels::ThreadScope threads(c.workers);
    trained = train(pairs, tc);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kStageRegression, e.what());
  }
  outcome.loss_history = trained.loss_history;

  fs::create_directories(c.output);
  outcome.parameter_file = c.output / "regressor.pcrg";
  outcome.loss_file = c.output / "loss.csv";
  save_regressor(outcome.parameter_file, trained.params);
  write_loss_csv(outcome.loss_file, trained.loss_history);
  return outcome;
}

// ---------------------------------------------------------------------------

AblationTable ablate(const PipelineConfig& config) {
  if (config.ground_truth.empty()) throw ConfigError("ablation needs ground truth");
  const RunResult r = process(config);
  const GroundTruth gt = load_ground_truth(config.ground_truth);

  static const std::map<std::string, std::string> labels = {
      {kStageInitial, "Initial proposals"},
      {kStageSelection, "+ Selection"},
      {kStageMerging, "+ Merging"},
      {kStageRegression, "+ Regression"}};
  AblationTable table;
  double cumulative = 0.0;
  const double n_images = std::max<std::size_t>(r.images.size(), 1);
  for (const auto& timing : r.stages) {
    cumulative += timing.seconds;
    const auto report = evaluate_proposals(ranked_boxes(r, timing.name), gt, kAblationBudgets);
    table.rows.push_back({labels.at(timing.name), report.recall50, cumulative / n_images});
  }
  return table;
}

std::string format_table(const AblationTable& table) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-20s", "");
  out << buf << "Recall@0.5\n";
  std::snprintf(buf, sizeof buf, "%-20s", "Method");
  out << buf;
  for (std::size_t k : kAblationBudgets) {
    std::snprintf(buf, sizeof buf, "%9zu", k);
    out << buf;
  }
  out << "   Time (s)\n";
  for (const auto& row : table.rows) {
    std::snprintf(buf, sizeof buf, "%-20s", row.name.c_str());
    out << buf;
    for (double v : row.recall50) {
      std::snprintf(buf, sizeof buf, "%9.4f", v);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%11.5f\n", row.seconds_per_image);
    out << buf;
  }
  return out.str();
}

nlohmann::ordered_json to_json(const AblationTable& table) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    rows.push_back({{"method", row.name},
                    {"budgets", kAblationBudgets},
                    {"recall@0.5", row.recall50},
                    {"seconds_per_image", row.seconds_per_image}});
  }
  return {{"rows", rows}};
}

// ---------------------------------------------------------------------------

EntropyAnalysis analyze_entropy(const PipelineConfig& config, std::size_t bins) {
  if (config.ground_truth.empty()) throw ConfigError("entropy analysis needs ground truth");
  PipelineConfig c = config;
  c.stages = {true, false, false};
  c.validate();
  const GroundTruth gt = load_ground_truth(c.ground_truth);
  const auto vocab = load_vocabulary(c.vocabulary, c.prompt_template);
  const auto provider = make_provider(c);
  const auto texts = embed_texts(*provider, vocab);

  std::unique_ptr<ProposalSource> source;
  const FileProposalSource* file = nullptr;
  if (c.builtin_proposals) {
    source = std::make_unique<BuiltinProposalSource>(c.budget, c.builtin);
  } else {
    auto f = std::make_unique<FileProposalSource>(c.proposals, c.budget);
    file = f.get();
    source = std::move(f);
  }
  const auto items = work_items(c, file);
  std::vector<AnalysisImage> images(items.size());
  for_each_image(items, c.workers, [&](const WorkItem& item) {
    Image pixels;
    if (!item.path.empty()) pixels = load_image(item.path);
    const ImageRef ref{item.id, item.path.empty() ? nullptr : &pixels};
    const auto initial = source->proposals(ref);
    const auto scored = score_proposals(*provider, ref, initial, texts, c.selection.temperature);
    const auto index = static_cast<std::size_t>(&item - items.data());
    auto& a = images[index];
    for (const auto& p : scored) {
      a.proposals.push_back(p.box);
      a.entropies.push_back(p.entropy);
    }
    if (const auto it = gt.images.find(item.id); it != gt.images.end()) {
      for (const auto& g : it->second) a.ground_truth.push_back(g.box);
    }
    return ImageOutcome{};
  });
  return analyze_entropies(images, vocab.size(), bins);
}

nlohmann::ordered_json to_json(const EntropyAnalysis& a) {
  const auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
  };
  return {{"categories", a.categories},
          {"max_entropy", std::log(double(a.categories))},
          {"correct", {{"count", a.correct_count}, {"mean_entropy", opt(a.mean_correct)}}},
          {"incorrect", {{"count", a.incorrect_count}, {"mean_entropy", opt(a.mean_incorrect)}}},
          {"bin_edges", a.bin_edges},
          {"histogram_correct", a.hist_correct},
          {"histogram_incorrect", a.hist_incorrect}};
}

// ---------------------------------------------------------------------------

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string overlay_svg(const fs::path& image_href, int width, int height,
                        std::span<const BBox> boxes, std::size_t top_k) {
  static const char* colors[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                                 "#42d4f4", "#f032e6", "#bfef45", "#469990", "#9a6324"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  s << "  <image href=\"" << xml_escape(image_href.generic_string()) << "\" width=\"" << width
    << "\" height=\"" << height << "\"/>\n";
  const std::size_t n = std::min(top_k, boxes.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = boxes[i];
    const char* c = colors[i % std::size(colors)];
    s << "  <rect x=\"" << b.x_min << "\" y=\"" << b.y_min << "\" width=\"" << b.width()
      << "\" height=\"" << b.height() << "\" fill=\"none\" stroke=\"" << c
      << "\" stroke-width=\"2\"/>\n";
    s << "  <text x=\"" << b.x_min + 2 << "\" y=\"" << b.y_min + 12 << "\" fill=\"" << c
      << "\" font-size=\"11\" font-family=\"monospace\">" << i + 1 << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string histogram_svg(const EntropyAnalysis& a) {
  const std::size_t bins = a.hist_correct.size();
  const int width = 640, height = 320, margin = 40;
  std::size_t peak = 1;
  for (std::size_t i = 0; i < bins; ++i) {
    peak = std::max({peak, a.hist_correct[i], a.hist_incorrect[i]});
  }
  const double bar = double(width - 2 * margin) / double(std::max<std::size_t>(bins, 1));
  const double scale = double(height - 2 * margin) / double(peak);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\">\n";
  s << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < bins; ++i) {
    const double x = margin + bar * double(i);
    for (int series = 0; series < 2; ++series) {
      const std::size_t count = series == 0 ? a.hist_correct[i] : a.hist_incorrect[i];
      const double h = scale * double(count);
      s << "  <rect x=\"" << x + series * bar / 2 << "\" y=\"" << height - margin - h
        << "\" width=\"" << bar / 2 << "\" height=\"" << h << "\" fill=\""
        << (series == 0 ? "#3cb44b" : "#e6194b") << "\"/>\n";
    }
  }
  s << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
    << width - margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  char label[64];
  std::snprintf(label, sizeof label, "entropy 0 .. %.3f", a.bin_edges.empty() ? 0.0 : a.bin_edges.back());
  s << "  <text x=\"" << margin << "\" y=\"" << height - 12 << "\" font-size=\"12\">" << label
    << "</text>\n";
  s << "  <text x=\"" << width - margin - 160 << "\" y=\"" << margin - 12
    << "\" font-size=\"12\" fill=\"#3cb44b\">correct</text>\n";
  s << "  <text x=\"" << width - margin - 90 << "\" y=\"" << margin - 12
    << "\" font-size=\"12\" fill=\"#e6194b\">incorrect</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace pclip
