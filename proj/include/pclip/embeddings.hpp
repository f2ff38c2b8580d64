// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pclip/geometry.hpp"
#include "pclip/image.hpp"

namespace pclip {

/// Float feature vector produced by an embedding backend. Vectors are kept
/// unnormalized; cosine_similarity normalizes.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  std::vector<float>& mutable_values() noexcept { return values_; }
  double norm() const noexcept;

  /// Throws InvalidInput unless every entry is finite and the norm exceeds 1e-12.
  void validate() const;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<float> values_;
};

/// Candidate category names plus the prompt template fed to the text encoder.
class CategoryVocabulary {
 public:
  static constexpr std::string_view kDefaultTemplate = "a photo of a {}";

  /// Throws InvalidInput on duplicates, fewer than two names or a template
  /// without exactly one "{}" placeholder.
  explicit CategoryVocabulary(std::vector<std::string> names,
                              std::string prompt_template = std::string(kDefaultTemplate));

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::string& prompt_template() const noexcept { return template_; }
  std::string prompt(std::size_t i) const;

 private:
  std::vector<std::string> names_;
  std::string template_;
};

/// Reads a vocabulary from a text file (one name per line, '#' comments) or a
/// JSON array of strings when the path ends in ".json".
CategoryVocabulary load_vocabulary(const std::filesystem::path& path,
                                   std::string prompt_template = std::string(
                                       CategoryVocabulary::kDefaultTemplate));

/// What the embedding backends receive for one image. `pixels` may be null
/// for backends that only look vectors up by id.
struct ImageRef {
  std::string id;
  const Image* pixels = nullptr;

  int width() const noexcept { return pixels ? pixels->width() : 0; }
  int height() const noexcept { return pixels ? pixels->height() : 0; }
};

struct ProviderCapabilities {
  bool image = true;
  bool text = true;
  /// False when calls must be serialized by the caller.
  bool concurrent = true;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual ProviderCapabilities capabilities() const = 0;

  /// Embedding of the crop `box` of `image`. Throws BackendError when the
  /// backend cannot produce a vector and InvalidInput for degenerate crops.
  virtual EmbeddingVector embed_region(const ImageRef& image, const BBox& box) = 0;
  virtual EmbeddingVector embed_image(const ImageRef& image) = 0;
  /// `prompt` is the filled template; `category` the bare name.
  virtual EmbeddingVector embed_text(std::string_view prompt, std::string_view category) = 0;
};

/// Serializes every call into an exclusive provider; forwards directly when
/// the provider declares itself concurrent.
class SerializedProvider final : public EmbeddingProvider {
 public:
  explicit SerializedProvider(std::shared_ptr<EmbeddingProvider> inner);

  std::string name() const override { return inner_->name(); }
  std::size_t dim() const override { return inner_->dim(); }
  ProviderCapabilities capabilities() const override;
  EmbeddingVector embed_region(const ImageRef& image, const BBox& box) override;
  EmbeddingVector embed_image(const ImageRef& image) override;
  EmbeddingVector embed_text(std::string_view prompt, std::string_view category) override;

 private:
  std::shared_ptr<EmbeddingProvider> inner_;
  bool exclusive_;
  std::mutex mutex_;
};

/// One text vector per vocabulary entry, in vocabulary order.
std::vector<EmbeddingVector> embed_texts(EmbeddingProvider& provider,
                                         const CategoryVocabulary& vocab);

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// exp(t * x_i) / sum_j exp(t * x_j), stabilized by subtracting the maximum.
std::vector<double> softmax(std::span<const double> logits, double temperature);

// ---------------------------------------------------------------------------
// Synthetic backend

struct PaletteColor {
  std::string name;
  Rgb rgb;
};

/// Deterministic test backend. Each crop pixel is assigned to its nearest
/// palette color; the region embedding is sum_k fraction_k * e_k where e_k is
/// the k-th standard basis vector, plus optional seeded noise. A crop of a
/// single palette color therefore maps exactly to that color's basis vector.
/// Text prompts whose last word names a palette color map to that basis
/// vector; other prompts map to a hashed pseudo-random vector supported on the
/// dimensions past the palette (orthogonal to every color).
class SyntheticProvider final : public EmbeddingProvider {
 public:
  struct Options {
    std::size_t dim = 32;
    double noise = 0.0;
    std::vector<PaletteColor> palette = default_palette();
  };

  SyntheticProvider();
  explicit SyntheticProvider(Options options);

  static std::vector<PaletteColor> default_palette();
  /// Looks up a palette color by name.
  static std::optional<Rgb> color(std::string_view name);

  std::string name() const override { return "synthetic"; }
  std::size_t dim() const override { return options_.dim; }
  ProviderCapabilities capabilities() const override { return {true, true, true}; }
  EmbeddingVector embed_region(const ImageRef& image, const BBox& box) override;
  EmbeddingVector embed_image(const ImageRef& image) override;
  EmbeddingVector embed_text(std::string_view prompt, std::string_view category) override;

  /// Index of the palette entry nearest to `c` (ties go to the lower index).
  std::size_t nearest(Rgb c) const noexcept;
  const Options& options() const noexcept { return options_; }

 private:
  EmbeddingVector embed_pixels(const Image& image, const PixelRect& rect) const;

  Options options_;
};

// ---------------------------------------------------------------------------
// Embedding file ("PCEB")

struct EmbeddingFileMeta {
  std::uint16_t version = 1;
  std::uint16_t dim = 0;
  std::uint32_t count = 0;
};

struct EmbeddingStore {
  std::uint16_t dim = 0;
  std::map<std::string, EmbeddingVector> vectors;
};

std::string image_key(std::string_view image_id);
/// "box:<image_id>:<x0>:<y0>:<x1>:<y1>" with coordinates printed to 2 decimals.
std::string box_key(std::string_view image_id, const BBox& box);
std::string text_key(std::string_view category);

/// Writes records in key order. Throws InvalidInput when a vector's size
/// differs from `store.dim` or a key exceeds 65535 bytes.
void store_embedding_file(const std::filesystem::path& path, const EmbeddingStore& store);
std::vector<std::uint8_t> encode_embedding_file(const EmbeddingStore& store);

/// Throws FormatError naming the byte offset on bad magic, unsupported
/// version, truncation, duplicate keys, or (when given) a header dimension
/// different from `expected_dim`.
std::pair<EmbeddingFileMeta, EmbeddingStore> load_embedding_file(
    const std::filesystem::path& path, std::optional<std::uint16_t> expected_dim = std::nullopt);
std::pair<EmbeddingFileMeta, EmbeddingStore> decode_embedding_file(
    std::span<const std::uint8_t> bytes, std::optional<std::uint16_t> expected_dim = std::nullopt);

/// Looks vectors up in a PCEB store. Regions not present in the store are
/// delegated to `fallback` when one is set, otherwise BackendError.
class PrecomputedProvider final : public EmbeddingProvider {
 public:
  explicit PrecomputedProvider(EmbeddingStore store,
                               std::shared_ptr<EmbeddingProvider> fallback = nullptr);
  static std::shared_ptr<PrecomputedProvider> from_file(
      const std::filesystem::path& path, std::shared_ptr<EmbeddingProvider> fallback = nullptr);

  std::string name() const override { return "precomputed"; }
  std::size_t dim() const override { return store_.dim; }
  ProviderCapabilities capabilities() const override;
  EmbeddingVector embed_region(const ImageRef& image, const BBox& box) override;
  EmbeddingVector embed_image(const ImageRef& image) override;
  EmbeddingVector embed_text(std::string_view prompt, std::string_view category) override;

  const EmbeddingStore& store() const noexcept { return store_; }

 private:
  EmbeddingVector lookup(const std::string& key) const;

  EmbeddingStore store_;
  std::shared_ptr<EmbeddingProvider> fallback_;
};

// ---------------------------------------------------------------------------
// ONNX backend

/// Runs an exported image encoder with ONNX Runtime. The model takes one
/// float tensor [1, 3, S, S] (CLIP-normalized RGB) and returns [1, D]. Text
/// vectors come from a PCEB store of "txt:" records produced alongside the
/// exported model. Available only when the toolkit is built with ONNX
/// Runtime; otherwise the constructor throws BackendError.
class OnnxProvider final : public EmbeddingProvider {
 public:
  struct Options {
    std::filesystem::path image_model;
    std::filesystem::path text_vectors;  // optional PCEB file with txt: records
    int input_size = 224;
    std::array<float, 3> mean = {0.48145466f, 0.4578275f, 0.40821073f};
    std::array<float, 3> stddev = {0.26862954f, 0.26130258f, 0.27577711f};
    int intra_op_threads = 1;
  };

  explicit OnnxProvider(Options options);
  ~OnnxProvider() override;

  static bool available() noexcept;

  std::string name() const override { return "onnx"; }
  std::size_t dim() const override;
  ProviderCapabilities capabilities() const override;
  EmbeddingVector embed_region(const ImageRef& image, const BBox& box) override;
  EmbeddingVector embed_image(const ImageRef& image) override;
  EmbeddingVector embed_text(std::string_view prompt, std::string_view category) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pclip
