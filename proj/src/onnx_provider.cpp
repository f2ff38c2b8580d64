// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/embeddings.hpp"
#include "pclip/error.hpp"

#ifdef PCLIP_WITH_ONNXRUNTIME
#include <onnxruntime_cxx_api.h>
#endif

namespace pclip {

#ifdef PCLIP_WITH_ONNXRUNTIME

struct OnnxProvider::Impl {
  Options options;
  Ort::Env env{ORT_LOGGING_LEVEL_WARNING, "pclip"};
  Ort::Session session{nullptr};
  std::string input_name;
  std::string output_name;
  std::size_t dim = 0;
  std::optional<EmbeddingStore> texts;

  explicit Impl(Options o) : options(std::move(o)) {
    Ort::SessionOptions so;
    so.SetIntraOpNumThreads(options.intra_op_threads);
    so.SetGraphOptimizationLevel(GraphOptimizationLevel::ORT_ENABLE_ALL);
    try {
      session = Ort::Session(env, options.image_model.c_str(), so);
    } catch (const Ort::Exception& e) {
      throw BackendError("cannot load image encoder " + options.image_model.string() + ": " +
                         e.what());
    }
    Ort::AllocatorWithDefaultOptions alloc;
    input_name = session.GetInputNameAllocated(0, alloc).get();
    output_name = session.GetOutputNameAllocated(0, alloc).get();
    const auto shape = session.GetOutputTypeInfo(0).GetTensorTypeAndShapeInfo().GetShape();
    if (shape.size() != 2 || shape[1] <= 0) {
      throw BackendError("image encoder output must have shape [N, D]");
    }
    dim = static_cast<std::size_t>(shape[1]);
    if (!options.text_vectors.empty()) {
      texts = load_embedding_file(options.text_vectors, static_cast<std::uint16_t>(dim)).second;
    }
  }

  EmbeddingVector run(const Image& image, const BBox& box) {
    const int s = options.input_size;
    std::vector<float> input = crop_resize_bilinear(image, box, s);
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    for (int c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        float& v = input[c * plane + i];
        v = (v - options.mean[c]) / options.stddev[c];
      }
    }
    const std::array<std::int64_t, 4> shape{1, 3, s, s};
    auto mem = Ort::MemoryInfo::CreateCpu(OrtArenaAllocator, OrtMemTypeDefault);
    Ort::Value tensor = Ort::Value::CreateTensor<float>(mem, input.data(), input.size(),
                                                        shape.data(), shape.size());
    const char* in_names[] = {input_name.c_str()};
    const char* out_names[] = {output_name.c_str()};
    try {
      auto out = session.Run(Ort::RunOptions{nullptr}, in_names, &tensor, 1, out_names, 1);
      const float* data = out.front().GetTensorData<float>();
      return EmbeddingVector(std::vector<float>(data, data + dim));
    } catch (const Ort::Exception& e) {
      throw BackendError(std::string("image encoder inference failed: ") + e.what());
    }
  }
};

OnnxProvider::OnnxProvider(Options options) : impl_(std::make_unique<Impl>(std::move(options))) {}

bool OnnxProvider::available() noexcept { return true; }

std::size_t OnnxProvider::dim() const { return impl_->dim; }

ProviderCapabilities OnnxProvider::capabilities() const {
  // Ort::Session::Run is thread-safe.
  return {true, impl_->texts.has_value(), true};
}

EmbeddingVector OnnxProvider::embed_region(const ImageRef& image, const BBox& box) {
  if (!image.pixels) throw BackendError("ONNX backend needs pixels for image " + image.id);
  return impl_->run(*image.pixels, box);
}

EmbeddingVector OnnxProvider::embed_image(const ImageRef& image) {
  if (!image.pixels) throw BackendError("ONNX backend needs pixels for image " + image.id);
  return impl_->run(*image.pixels, BBox{0, 0, double(image.width()), double(image.height())});
}

EmbeddingVector OnnxProvider::embed_text(std::string_view, std::string_view category) {
  if (!impl_->texts) throw BackendError("ONNX backend has no text vectors configured");
  const auto it = impl_->texts->vectors.find(text_key(category));
  if (it == impl_->texts->vectors.end()) {
    throw BackendError("no text vector for category '" + std::string(category) + "'");
  }
  return it->second;
}

#else  // !PCLIP_WITH_ONNXRUNTIME

struct OnnxProvider::Impl {};

OnnxProvider::OnnxProvider(Options) {
  throw BackendError("this build of pclip has no ONNX Runtime support");
}

bool OnnxProvider::available() noexcept { return false; }
std::size_t OnnxProvider::dim() const { return 0; }
ProviderCapabilities OnnxProvider::capabilities() const { return {false, false, true}; }

EmbeddingVector OnnxProvider::embed_region(const ImageRef&, const BBox&) {
  throw BackendError("ONNX Runtime support not built");
}
EmbeddingVector OnnxProvider::embed_image(const ImageRef&) {
  throw BackendError("ONNX Runtime support not built");
}
EmbeddingVector OnnxProvider::embed_text(std::string_view, std::string_view) {
  throw BackendError("ONNX Runtime support not built");
}

#endif

OnnxProvider::~OnnxProvider() = default;

}  // namespace pclip
