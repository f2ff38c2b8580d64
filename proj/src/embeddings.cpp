// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/embeddings.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "pclip/error.hpp"

namespace pclip {

double EmbeddingVector::norm() const noexcept {
  double s = 0.0;
  for (float v : values_) s += double(v) * double(v);
  return std::sqrt(s);
}

void EmbeddingVector::validate() const {
  for (float v : values_) {
    if (!std::isfinite(v)) throw InvalidInput("embedding has a non-finite entry");
  }
  if (!(norm() > 1e-12)) throw InvalidInput("embedding norm is zero");
}

// ---------------------------------------------------------------------------

CategoryVocabulary::CategoryVocabulary(std::vector<std::string> names, std::string prompt_template)
    : names_(std::move(names)), template_(std::move(prompt_template)) {
  if (names_.size() < 2) throw InvalidInput("vocabulary needs at least two categories");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InvalidInput("vocabulary contains an empty category name");
    if (!seen.insert(n).second) throw InvalidInput("duplicate category '" + n + "' in vocabulary");
  }
  const auto first = template_.find("{}");
  if (first == std::string::npos || template_.find("{}", first + 2) != std::string::npos) {
    throw InvalidInput("prompt template must contain exactly one {} placeholder");
  }
}

std::string CategoryVocabulary::prompt(std::size_t i) const {
  std::string out = template_;
  out.replace(out.find("{}"), 2, name(i));
  return out;
}

CategoryVocabulary load_vocabulary(const std::filesystem::path& path,
                                   std::string prompt_template) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open vocabulary " + path.string());
  std::vector<std::string> names;
  if (path.extension() == ".json") {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw FormatError(path.string() + ": expected a JSON array", "$");
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_string()) {
        throw FormatError(path.string() + ": expected a string", "$[" + std::to_string(i) + "]");
      }
      names.push_back(j[i].get<std::string>());
    }
  } else {
    std::string line;
    while (std::getline(in, line)) {
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos || line[b] == '#') continue;
      const auto e = line.find_last_not_of(" \t\r");
      names.push_back(line.substr(b, e - b + 1));
    }
  }
  return CategoryVocabulary(std::move(names), std::move(prompt_template));
}

// ---------------------------------------------------------------------------

SerializedProvider::SerializedProvider(std::shared_ptr<EmbeddingProvider> inner)
    : inner_(std::move(inner)), exclusive_(!inner_->capabilities().concurrent) {}

ProviderCapabilities SerializedProvider::capabilities() const {
  auto caps = inner_->capabilities();
  caps.concurrent = true;
  return caps;
}

EmbeddingVector SerializedProvider::embed_region(const ImageRef& image, const BBox& box) {
  if (!exclusive_) return inner_->embed_region(image, box);
  std::lock_guard lock(mutex_);
  return inner_->embed_region(image, box);
}

EmbeddingVector SerializedProvider::embed_image(const ImageRef& image) {
  if (!exclusive_) return inner_->embed_image(image);
  std::lock_guard lock(mutex_);
  return inner_->embed_image(image);
}

EmbeddingVector SerializedProvider::embed_text(std::string_view prompt, std::string_view category) {
  if (!exclusive_) return inner_->embed_text(prompt, category);
  std::lock_guard lock(mutex_);
  return inner_->embed_text(prompt, category);
}

std::vector<EmbeddingVector> embed_texts(EmbeddingProvider& provider,
                                         const CategoryVocabulary& vocab) {
  if (!provider.capabilities().text) {
    throw BackendError("embedding backend '" + provider.name() + "' cannot embed text");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out.push_back(provider.embed_text(vocab.prompt(i), vocab.name(i)));
    if (out.back().dim() != provider.dim()) {
      throw BackendError("text embedding for '" + vocab.name(i) + "' has dimension " +
                         std::to_string(out.back().dim()) + ", backend declares " +
                         std::to_string(provider.dim()));
    }
  }
  return out;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw InvalidInput("cosine similarity of vectors with dimensions " + std::to_string(a.dim()) +
                       " and " + std::to_string(b.dim()));
  }
  a.validate();
  b.validate();
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += double(a.values()[i]) * double(b.values()[i]);
  return std::clamp(dot / (a.norm() * b.norm()), -1.0, 1.0);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidInput("softmax temperature must be positive and finite");
  }
  if (logits.empty()) throw InvalidInput("softmax of an empty vector");
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : logits) {
    if (!std::isfinite(x)) throw InvalidInput("softmax logits must be finite");
    mx = std::max(mx, x);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(temperature * (logits[i] - mx));
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = 1469598103934665603ull) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view s) {
  return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

// Uniform in [-1, 1) from the top 53 bits; platform independent unlike
// std::uniform_real_distribution.
double unit_uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<PaletteColor> SyntheticProvider::default_palette() {
  return {
      {"red", {220, 40, 40}},      {"green", {40, 180, 60}},    {"blue", {40, 70, 220}},
      {"yellow", {235, 215, 50}},  {"cyan", {40, 200, 210}},    {"magenta", {210, 50, 200}},
      {"orange", {240, 140, 30}},  {"purple", {120, 50, 160}},  {"brown", {120, 75, 35}},
      {"gray", {128, 128, 128}},   {"black", {20, 20, 20}},     {"white", {240, 240, 240}},
  };
}

std::optional<Rgb> SyntheticProvider::color(std::string_view name) {
  for (const auto& c : default_palette()) {
    if (c.name == name) return c.rgb;
  }
  return std::nullopt;
}

SyntheticProvider::SyntheticProvider() : SyntheticProvider(Options{}) {}

SyntheticProvider::SyntheticProvider(Options options) : options_(std::move(options)) {
  if (options_.palette.empty()) throw InvalidInput("synthetic palette is empty");
  if (options_.dim < options_.palette.size()) {
    throw InvalidInput("synthetic dimension must be at least the palette size");
  }
  if (!(options_.noise >= 0.0)) throw InvalidInput("synthetic noise must be non-negative");
}

std::size_t SyntheticProvider::nearest(Rgb c) const noexcept {
  std::size_t best = 0;
  int best_d = std::numeric_limits<int>::max();
  for (std::size_t k = 0; k < options_.palette.size(); ++k) {
    const auto& p = options_.palette[k].rgb;
    int d = 0;
    for (int ch = 0; ch < 3; ++ch) d += (int(c[ch]) - p[ch]) * (int(c[ch]) - p[ch]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

EmbeddingVector SyntheticProvider::embed_pixels(const Image& image, const PixelRect& r) const {
  std::vector<double> counts(options_.palette.size(), 0.0);
  std::uint64_t h = 1469598103934665603ull;
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      const Rgb c = image.at(x, y);
      counts[nearest(c)] += 1.0;
      if (options_.noise > 0.0) h = fnv1a(c, h);
    }
  }
  const double n = double(r.width()) * r.height();
  std::vector<float> v(options_.dim, 0.0f);
  for (std::size_t k = 0; k < counts.size(); ++k) v[k] = static_cast<float>(counts[k] / n);
  if (options_.noise > 0.0) {
    const std::uint8_t dims[8] = {std::uint8_t(r.width()), std::uint8_t(r.width() >> 8),
                                  std::uint8_t(r.height()), std::uint8_t(r.height() >> 8)};
    std::mt19937_64 rng(fnv1a(dims, h));
    for (float& x : v) x += static_cast<float>(options_.noise * unit_uniform(rng));
  }
  return EmbeddingVector(std::move(v));
}

EmbeddingVector SyntheticProvider::embed_region(const ImageRef& image, const BBox& box) {
  if (!image.pixels) throw BackendError("synthetic backend needs pixels for image " + image.id);
  return embed_pixels(*image.pixels, pixel_rect(box, image.width(), image.height()));
}

EmbeddingVector SyntheticProvider::embed_image(const ImageRef& image) {
  if (!image.pixels) throw BackendError("synthetic backend needs pixels for image " + image.id);
  return embed_pixels(*image.pixels, {0, 0, image.width(), image.height()});
}

EmbeddingVector SyntheticProvider::embed_text(std::string_view prompt, std::string_view) {
  const auto space = prompt.find_last_of(' ');
  const std::string last = lower(space == std::string_view::npos ? prompt : prompt.substr(space + 1));
  std::vector<float> v(options_.dim, 0.0f);
  for (std::size_t k = 0; k < options_.palette.size(); ++k) {
    if (options_.palette[k].name == last) {
      v[k] = 1.0f;
      return EmbeddingVector(std::move(v));
    }
  }
  const std::size_t first = options_.dim > options_.palette.size() ? options_.palette.size() : 0;
  std::mt19937_64 rng(fnv1a(prompt));
  for (std::size_t k = first; k < options_.dim; ++k) v[k] = static_cast<float>(unit_uniform(rng));
  return EmbeddingVector(std::move(v));
}

// ---------------------------------------------------------------------------

std::string image_key(std::string_view image_id) { return "img:" + std::string(image_id); }

std::string box_key(std::string_view image_id, const BBox& b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), ":%.2f:%.2f:%.2f:%.2f", b.x_min, b.y_min, b.x_max, b.y_max);
  return "box:" + std::string(image_id) + buf;
}

std::string text_key(std::string_view category) { return "txt:" + std::string(category); }

namespace {

constexpr char kMagic[4] = {'P', 'C', 'E', 'B'};
constexpr std::uint16_t kVersion = 1;

using binary::put_u16;
using binary::put_u32;

}  // namespace

std::vector<std::uint8_t> encode_embedding_file(const EmbeddingStore& store) {
  if (store.vectors.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidInput("too many embedding records");
  }
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u16(out, kVersion);
  put_u16(out, store.dim);
  put_u32(out, static_cast<std::uint32_t>(store.vectors.size()));
  for (const auto& [key, vec] : store.vectors) {
    if (key.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw InvalidInput("embedding key longer than 65535 bytes");
    }
    if (vec.dim() != store.dim) {
      throw InvalidInput("embedding '" + key + "' has dimension " + std::to_string(vec.dim()) +
                         ", store declares " + std::to_string(store.dim));
    }
    put_u16(out, static_cast<std::uint16_t>(key.size()));
    out.insert(out.end(), key.begin(), key.end());
    for (float f : vec.values()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

void store_embedding_file(const std::filesystem::path& path, const EmbeddingStore& store) {
  binary::write_file(path, encode_embedding_file(store));
}

std::pair<EmbeddingFileMeta, EmbeddingStore> decode_embedding_file(
    std::span<const std::uint8_t> bytes, std::optional<std::uint16_t> expected_dim) {
  binary::Reader r(bytes, "embedding file");
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    throw FormatError("not an embedding file: bad magic", "byte 0");
  }
  EmbeddingFileMeta meta;
  meta.version = r.u16("version");
  if (meta.version != kVersion) {
    throw FormatError("unsupported embedding file version " + std::to_string(meta.version),
                      "byte 4");
  }
  meta.dim = r.u16("dimension");
  if (expected_dim && meta.dim != *expected_dim) {
    throw FormatError("embedding dimension " + std::to_string(meta.dim) + " does not match " +
                          std::to_string(*expected_dim),
                      "byte 6");
  }
  meta.count = r.u32("record count");

  EmbeddingStore store;
  store.dim = meta.dim;
  for (std::uint32_t i = 0; i < meta.count; ++i) {
    const std::size_t record_start = r.offset();
    const std::uint16_t key_len = r.u16("key length");
    const auto key_bytes = r.take(key_len, "key");
    std::string key(key_bytes.begin(), key_bytes.end());
    const auto raw = r.take(std::size_t(meta.dim) * 4, "vector");
    std::vector<float> v(meta.dim);
    for (std::size_t k = 0; k < meta.dim; ++k) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= std::uint32_t(raw[k * 4 + b]) << (8 * b);
      v[k] = std::bit_cast<float>(u);
    }
    if (!store.vectors.emplace(std::move(key), EmbeddingVector(std::move(v))).second) {
      throw FormatError("duplicate embedding key", "byte " + std::to_string(record_start));
    }
  }
  if (r.offset() != bytes.size()) {
    throw FormatError("trailing bytes after last record", "byte " + std::to_string(r.offset()));
  }
  return {meta, std::move(store)};
}

std::pair<EmbeddingFileMeta, EmbeddingStore> load_embedding_file(
    const std::filesystem::path& path, std::optional<std::uint16_t> expected_dim) {
  const auto bytes = binary::read_file(path);
  try {
    return decode_embedding_file(bytes, expected_dim);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

PrecomputedProvider::PrecomputedProvider(EmbeddingStore store,
                                         std::shared_ptr<EmbeddingProvider> fallback)
    : store_(std::move(store)), fallback_(std::move(fallback)) {
  if (fallback_ && fallback_->dim() != store_.dim) {
    throw InvalidInput("fallback backend dimension differs from the embedding file");
  }
}

std::shared_ptr<PrecomputedProvider> PrecomputedProvider::from_file(
    const std::filesystem::path& path, std::shared_ptr<EmbeddingProvider> fallback) {
  return std::make_shared<PrecomputedProvider>(load_embedding_file(path).second,
                                               std::move(fallback));
}

ProviderCapabilities PrecomputedProvider::capabilities() const {
  ProviderCapabilities caps{true, true, true};
  if (fallback_) caps.concurrent = fallback_->capabilities().concurrent;
  return caps;
}

EmbeddingVector PrecomputedProvider::lookup(const std::string& key) const {
  const auto it = store_.vectors.find(key);
  if (it == store_.vectors.end()) throw BackendError("no precomputed embedding for key " + key);
  return it->second;
}

EmbeddingVector PrecomputedProvider::embed_region(const ImageRef& image, const BBox& box) {
  const auto key = box_key(image.id, box);
  if (store_.vectors.count(key) == 0 && fallback_) return fallback_->embed_region(image, box);
  return lookup(key);
}

EmbeddingVector PrecomputedProvider::embed_image(const ImageRef& image) {
  const auto key = image_key(image.id);
  if (store_.vectors.count(key) == 0 && fallback_) return fallback_->embed_image(image);
  return lookup(key);
}

EmbeddingVector PrecomputedProvider::embed_text(std::string_view prompt, std::string_view category) {
  const auto key = text_key(category);
  if (store_.vectors.count(key) == 0 && fallback_) return fallback_->embed_text(prompt, category);
  return lookup(key);
}

}  // namespace pclip
