// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "pclip/regression.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "binary_io.hpp"
#include "pclip/error.hpp"
#include "pclip/kernels.hpp"
#include "pclip/log.hpp"

namespace pclip {
namespace {

auto box_tuple(const BBox& b) { return std::tie(b.x_min, b.y_min, b.x_max, b.y_max); }

bool id_box_less(const PoolProposal& a, const PoolProposal& b) {
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  return box_tuple(a.box) < box_tuple(b.box);
}

double unit_uniform(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
  // Box-Muller on our own uniforms keeps initialization identical across
  // standard library implementations.
  double u1 = unit_uniform(rng);
  while (u1 <= 0.0) u1 = unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void check_fraction(double p, const char* name) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw InvalidInput(std::string(name) + " must lie in (0, 1]");
  }
}

}  // namespace

std::vector<PseudoLabel> mine_pseudo_labels(std::span<const PoolProposal> pool, double p_entropy,
                                            double p_score) {
  check_fraction(p_entropy, "entropy fraction");
  check_fraction(p_score, "score fraction");
  if (pool.empty()) {
    log_warning("pseudo-label pool is empty");
    return {};
  }
  const std::size_t n = pool.size();
  const auto top = [n](double p) {
    return std::min(n, static_cast<std::size_t>(std::ceil(p * double(n) - 1e-9)));
  };

  std::vector<std::size_t> by_entropy(n);
  std::iota(by_entropy.begin(), by_entropy.end(), std::size_t{0});
  auto by_score = by_entropy;
  std::sort(by_entropy.begin(), by_entropy.end(), [&](std::size_t a, std::size_t b) {
    if (pool[a].entropy != pool[b].entropy) return pool[a].entropy < pool[b].entropy;
    return id_box_less(pool[a], pool[b]);
  });
  std::sort(by_score.begin(), by_score.end(), [&](std::size_t a, std::size_t b) {
    if (pool[a].initial_score != pool[b].initial_score) {
      return pool[a].initial_score > pool[b].initial_score;
    }
    return id_box_less(pool[a], pool[b]);
  });

  const std::set<std::size_t> low_entropy(by_entropy.begin(),
                                          by_entropy.begin() + std::ptrdiff_t(top(p_entropy)));
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < top(p_score); ++k) {
    if (low_entropy.count(by_score[k])) picked.push_back(by_score[k]);
  }
  std::sort(picked.begin(), picked.end(),
            [&](std::size_t a, std::size_t b) { return id_box_less(pool[a], pool[b]); });

  std::vector<PseudoLabel> out;
  out.reserve(picked.size());
  for (std::size_t i : picked) {
    out.push_back({pool[i].image_id, pool[i].box, pool[i].entropy, pool[i].initial_score});
  }
  if (out.empty()) {
    log_warning("no proposal is both low-entropy and high-scoring; no pseudo labels mined");
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

DenseLayer make_dense(std::size_t in, std::size_t out) {
  return {in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0)};
}

BatchNormLayer make_bn(std::size_t dim) {
  return {dim, std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0),
          std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

}  // namespace

RegressorParams RegressorParams::initialize(std::size_t embedding_dim, std::size_t hidden1,
                                            std::size_t hidden2, std::uint64_t seed) {
  if (embedding_dim == 0 || hidden1 == 0 || hidden2 == 0) {
    throw InvalidInput("regressor dimensions must be positive");
  }
  RegressorParams p;
  p.embedding_dim = embedding_dim;
  p.fc1 = make_dense(p.input_dim(), hidden1);
  p.bn1 = make_bn(hidden1);
  p.fc2 = make_dense(hidden1, hidden2);
  p.bn2 = make_bn(hidden2);
  p.fc3 = make_dense(hidden2, 4);

  std::mt19937_64 rng(seed);
  for (DenseLayer* layer : {&p.fc1, &p.fc2}) {
    const double stddev = std::sqrt(2.0 / double(layer->in_dim));
    for (double& w : layer->weight) w = stddev * standard_normal(rng);
  }
  const double bound = 1.0 / std::sqrt(double(hidden2));
  for (double& w : p.fc3.weight) w = bound * (2.0 * unit_uniform(rng) - 1.0);
  return p;
}

void RegressorParams::validate() const {
  const auto check_dense = [](const DenseLayer& l, std::size_t in, std::size_t out,
                              const char* name) {
    if (l.in_dim != in || l.out_dim != out || l.weight.size() != in * out ||
        l.bias.size() != out) {
      throw InvalidInput(std::string("regressor layer ") + name + " has inconsistent dimensions");
    }
  };
  const auto check_bn = [](const BatchNormLayer& l, std::size_t dim, const char* name) {
    if (l.dim != dim || l.gamma.size() != dim || l.beta.size() != dim ||
        l.running_mean.size() != dim || l.running_var.size() != dim) {
      throw InvalidInput(std::string("regressor batch norm ") + name +
                         " has inconsistent dimensions");
    }
    for (double v : l.running_var) {
      if (v < 0.0) throw InvalidInput(std::string("negative running variance in ") + name);
    }
  };
  if (embedding_dim == 0) throw InvalidInput("regressor embedding dimension is zero");
  check_dense(fc1, input_dim(), fc1.out_dim, "fc1");
  check_bn(bn1, fc1.out_dim, "bn1");
  check_dense(fc2, fc1.out_dim, fc2.out_dim, "fc2");
  check_bn(bn2, fc2.out_dim, "bn2");
  check_dense(fc3, fc2.out_dim, 4, "fc3");
  if (fc1.out_dim == 0 || fc2.out_dim == 0) throw InvalidInput("regressor hidden width is zero");
  for (const auto& t : tensors()) {
    for (double v : t) {
      if (!std::isfinite(v)) throw InvalidInput("regressor parameters contain non-finite values");
    }
  }
}

std::vector<std::span<double>> RegressorParams::tensors() {
  return {fc1.weight,        fc1.bias,         bn1.gamma, bn1.beta,  bn1.running_mean,
          bn1.running_var,   fc2.weight,       fc2.bias,  bn2.gamma, bn2.beta,
          bn2.running_mean,  bn2.running_var,  fc3.weight, fc3.bias};
}

std::vector<std::span<const double>> RegressorParams::tensors() const {
  auto mut = const_cast<RegressorParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

namespace {

/// Trainable subset of tensors(), in the same order.
std::vector<std::span<double>> trainable(RegressorParams& p) {
  return {p.fc1.weight, p.fc1.bias, p.bn1.gamma, p.bn1.beta, p.fc2.weight,
          p.fc2.bias,   p.bn2.gamma, p.bn2.beta, p.fc3.weight, p.fc3.bias};
}

double sigmoid(double x) noexcept {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void dense(const DenseLayer& l, std::span<const double> in, std::size_t n, std::span<double> out,
           bool parallel) {
  if (parallel) {
    kernels::parallel::dense_forward(in, n, l.in_dim, l.weight, l.bias, l.out_dim, out);
  } else {
    kernels::serial::dense_forward(in, n, l.in_dim, l.weight, l.bias, l.out_dim, out);
  }
}

void dense_grad(const DenseLayer& l, std::span<const double> in, std::size_t n,
                std::span<const double> grad_out, DenseLayer& grad, std::span<double> grad_in,
                bool parallel) {
  if (parallel) {
    kernels::parallel::dense_backward(in, n, l.in_dim, l.weight, l.out_dim, grad_out,
                                      grad.weight, grad.bias, grad_in);
  } else {
    kernels::serial::dense_backward(in, n, l.in_dim, l.weight, l.out_dim, grad_out, grad.weight,
                                    grad.bias, grad_in);
  }
}

void check_features(const RegressorParams& params, std::span<const double> features,
                    std::size_t count) {
  if (features.size() != count * params.input_dim()) {
    throw InvalidInput("regressor input has " + std::to_string(features.size()) +
                       " values, expected " + std::to_string(count) + " rows of " +
                       std::to_string(params.input_dim()));
  }
}

// Training-mode batch norm over `n` rows, with what backward needs.
struct BatchNormCache {
  std::vector<double> xhat;
  std::vector<double> inv_std;
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

void batch_norm_train(const BatchNormLayer& bn, std::span<double> x, std::size_t n,
                      BatchNormCache& cache) {
  const std::size_t d = bn.dim;
  cache.mean.assign(d, 0.0);
  cache.var.assign(d, 0.0);
  cache.inv_std.assign(d, 0.0);
  cache.xhat.assign(n * d, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < d; ++j) cache.mean[j] += x[b * d + j];
  for (double& m : cache.mean) m /= double(n);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[b * d + j] - cache.mean[j];
      cache.var[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    cache.var[j] /= double(n);
    cache.inv_std[j] = 1.0 / std::sqrt(cache.var[j] + kBatchNormEpsilon);
  }
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (x[b * d + j] - cache.mean[j]) * cache.inv_std[j];
      cache.xhat[b * d + j] = xh;
      x[b * d + j] = bn.gamma[j] * xh + bn.beta[j];
    }
  }
}

void batch_norm_eval(const BatchNormLayer& bn, std::span<double> x, std::size_t n) {
  const std::size_t d = bn.dim;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      const double inv = 1.0 / std::sqrt(bn.running_var[j] + kBatchNormEpsilon);
      x[b * d + j] = bn.gamma[j] * (x[b * d + j] - bn.running_mean[j]) * inv + bn.beta[j];
    }
  }
}

// grad holds dL/dy on entry and dL/dx on exit.
void batch_norm_backward(const BatchNormLayer& bn, const BatchNormCache& cache,
                         std::span<double> grad, std::size_t n, BatchNormLayer& out) {
  const std::size_t d = bn.dim;
  std::vector<double> sum_g(d, 0.0), sum_gx(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) out.gamma[j] = out.beta[j] = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      const double g = grad[b * d + j];
      out.gamma[j] += g * cache.xhat[b * d + j];
      out.beta[j] += g;
      const double gx = g * bn.gamma[j];
      sum_g[j] += gx;
      sum_gx[j] += gx * cache.xhat[b * d + j];
    }
  }
  const double inv_n = 1.0 / double(n);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      const double gx = grad[b * d + j] * bn.gamma[j];
      grad[b * d + j] = cache.inv_std[j] * inv_n *
                        (double(n) * gx - sum_g[j] - cache.xhat[b * d + j] * sum_gx[j]);
    }
  }
}

void relu(std::span<double> x) {
  for (double& v : x) v = std::max(v, 0.0);
}

struct ForwardCache {
  std::vector<double> a1, a2, out;  // post-ReLU activations, sigmoid outputs
  BatchNormCache bn1, bn2;
};

// Training-mode forward pass; returns the mean loss.
double forward_train(const RegressorParams& p, std::span<const double> x,
                     std::span<const double> targets, std::size_t n, ForwardCache& c,
                     bool parallel) {
  const std::size_t h1 = p.fc1.out_dim, h2 = p.fc2.out_dim;
  c.a1.assign(n * h1, 0.0);
  dense(p.fc1, x, n, c.a1, parallel);
  batch_norm_train(p.bn1, c.a1, n, c.bn1);
  relu(c.a1);
  c.a2.assign(n * h2, 0.0);
  dense(p.fc2, c.a1, n, c.a2, parallel);
  batch_norm_train(p.bn2, c.a2, n, c.bn2);
  relu(c.a2);
  c.out.assign(n * 4, 0.0);
  dense(p.fc3, c.a2, n, c.out, parallel);
  double loss = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < 4; ++k) c.out[b * 4 + k] = sigmoid(c.out[b * 4 + k]);
    loss += smooth_l1(std::span<const double, 4>(c.out.data() + b * 4, 4),
                      std::span<const double, 4>(targets.data() + b * 4, 4));
  }
  return loss / double(n);
}

RegressorParams zeros_like(const RegressorParams& p) {
  RegressorParams g = p;
  for (auto t : g.tensors()) std::fill(t.begin(), t.end(), 0.0);
  return g;
}

void backward(const RegressorParams& p, std::span<const double> x,
              std::span<const double> targets, std::size_t n, ForwardCache& c,
              RegressorParams& g, bool parallel) {
  const std::size_t h1 = p.fc1.out_dim, h2 = p.fc2.out_dim;
  std::vector<double> d_out(n * 4);
  for (std::size_t b = 0; b < n; ++b) {
    const auto gl = smooth_l1_gradient(std::span<const double, 4>(c.out.data() + b * 4, 4),
                                       std::span<const double, 4>(targets.data() + b * 4, 4));
    for (std::size_t k = 0; k < 4; ++k) {
      const double o = c.out[b * 4 + k];
      d_out[b * 4 + k] = gl[k] / double(n) * o * (1.0 - o);
    }
  }
  std::vector<double> d_a2(n * h2);
  dense_grad(p.fc3, c.a2, n, d_out, g.fc3, d_a2, parallel);
  for (std::size_t i = 0; i < d_a2.size(); ++i) {
    if (c.a2[i] <= 0.0) d_a2[i] = 0.0;
  }
  batch_norm_backward(p.bn2, c.bn2, d_a2, n, g.bn2);
  std::vector<double> d_a1(n * h1);
  dense_grad(p.fc2, c.a1, n, d_a2, g.fc2, d_a1, parallel);
  for (std::size_t i = 0; i < d_a1.size(); ++i) {
    if (c.a1[i] <= 0.0) d_a1[i] = 0.0;
  }
  batch_norm_backward(p.bn1, c.bn1, d_a1, n, g.bn1);
  dense_grad(p.fc1, x, n, d_a1, g.fc1, {}, parallel);
}

void update_running(BatchNormLayer& bn, const BatchNormCache& cache, std::size_t n) {
  const double unbias = double(n) / double(n - 1);
  for (std::size_t j = 0; j < bn.dim; ++j) {
    bn.running_mean[j] =
        (1.0 - kBatchNormMomentum) * bn.running_mean[j] + kBatchNormMomentum * cache.mean[j];
    bn.running_var[j] = (1.0 - kBatchNormMomentum) * bn.running_var[j] +
                        kBatchNormMomentum * cache.var[j] * unbias;
  }
}

NormalizedBBox ordered(const std::array<double, 4>& raw) {
  return {std::min(raw[0], raw[2]), std::min(raw[1], raw[3]), std::max(raw[0], raw[2]),
          std::max(raw[1], raw[3])};
}

}  // namespace

std::vector<double> regressor_features(const EmbeddingVector& region,
                                       const EmbeddingVector& image,
                                       const NormalizedBBox& coords) {
  if (region.dim() != image.dim()) {
    throw InvalidInput("region embedding has dimension " + std::to_string(region.dim()) +
                       ", image embedding " + std::to_string(image.dim()));
  }
  region.validate();
  image.validate();
  std::vector<double> out;
  out.reserve(2 * region.dim() + 4);
  for (const EmbeddingVector* v : {&region, &image}) {
    const double inv = 1.0 / v->norm();
    for (float f : v->values()) out.push_back(double(f) * inv);
  }
  out.insert(out.end(), {coords.x_min, coords.y_min, coords.x_max, coords.y_max});
  return out;
}

std::vector<RegressorOutput> predict(const RegressorParams& params,
                                     std::span<const double> features, std::size_t count) {
  check_features(params, features, count);
  if (count == 0) return {};
  const std::size_t h1 = params.fc1.out_dim, h2 = params.fc2.out_dim;
  std::vector<double> a1(count * h1), a2(count * h2), z(count * 4);
  dense(params.fc1, features, count, a1, false);
  batch_norm_eval(params.bn1, a1, count);
  relu(a1);
  dense(params.fc2, a1, count, a2, false);
  batch_norm_eval(params.bn2, a2, count);
  relu(a2);
  dense(params.fc3, a2, count, z, false);
  std::vector<RegressorOutput> out(count);
  for (std::size_t b = 0; b < count; ++b) {
    for (std::size_t k = 0; k < 4; ++k) out[b].raw[k] = sigmoid(z[b * 4 + k]);
    out[b].box = ordered(out[b].raw);
    out[b].degenerate = !(out[b].box.x_max > out[b].box.x_min) ||
                        !(out[b].box.y_max > out[b].box.y_min);
  }
  return out;
}

RegressorOutput predict_one(const RegressorParams& params, std::span<const double> features) {
  return predict(params, features, 1).front();
}

// ---------------------------------------------------------------------------

double smooth_l1(std::span<const double, 4> prediction, std::span<const double, 4> target) {
  double sum = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double d = std::abs(prediction[k] - target[k]);
    sum += d < 1.0 ? 0.5 * d * d : d - 0.5;
  }
  return sum / 4.0;
}

std::array<double, 4> smooth_l1_gradient(std::span<const double, 4> prediction,
                                         std::span<const double, 4> target) {
  std::array<double, 4> g{};
  for (std::size_t k = 0; k < 4; ++k) {
    const double d = prediction[k] - target[k];
    g[k] = (std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0)) / 4.0;
  }
  return g;
}

double batch_loss(const RegressorParams& params, std::span<const double> features,
                  std::span<const double> targets, std::size_t count, RegressorParams* gradients,
                  bool parallel) {
  check_features(params, features, count);
  if (targets.size() != count * 4) throw InvalidInput("expected 4 target values per row");
  if (count == 0) throw InvalidInput("empty batch");
  ForwardCache cache;
  const double loss = forward_train(params, features, targets, count, cache, parallel);
  if (gradients) {
    *gradients = zeros_like(params);
    backward(params, features, targets, count, cache, *gradients, parallel);
  }
  return loss;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("training needs at least one epoch");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (hidden1 == 0 || hidden2 == 0) throw ConfigError("hidden sizes must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_epsilon > 0.0)) {
    throw ConfigError("Adam hyperparameters out of range");
  }
  if (!(jitter_shift >= 0.0) || !(jitter_scale_min > 0.0) ||
      !(jitter_scale_min <= jitter_scale_max)) {
    throw ConfigError("jitter ranges out of range");
  }
}

TrainResult train(std::span<const TrainingPair> pairs, const TrainConfig& config) {
  config.validate();
  if (pairs.empty()) throw InvalidInput("regressor training set is empty");
  const std::size_t in_dim = pairs.front().features.size();
  if (in_dim < 6 || (in_dim - 4) % 2 != 0) {
    throw InvalidInput("training features must have 2D + 4 values");
  }
  for (const auto& pr : pairs) {
    if (pr.features.size() != in_dim) throw InvalidInput("training features differ in length");
  }

  TrainResult result;
  result.params =
      RegressorParams::initialize((in_dim - 4) / 2, config.hidden1, config.hidden2, config.seed);
  RegressorParams& params = result.params;

  auto weights = trainable(params);
  std::vector<std::vector<double>> m, v;
  for (auto w : weights) {
    m.emplace_back(w.size(), 0.0);
    v.emplace_back(w.size(), 0.0);
  }

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> x, t;
  ForwardCache cache;
  RegressorParams grads = zeros_like(params);
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      if (n < 2) continue;
      x.clear();
      t.clear();
      for (std::size_t k = 0; k < n; ++k) {
        const auto& pr = pairs[order[start + k]];
        x.insert(x.end(), pr.features.begin(), pr.features.end());
        t.insert(t.end(), {pr.target.x_min, pr.target.y_min, pr.target.x_max, pr.target.y_max});
      }
      const double loss = forward_train(params, x, t, n, cache, config.parallel);
      if (!std::isfinite(loss)) {
        throw Error("regressor training diverged: non-finite loss in epoch " +
                    std::to_string(epoch + 1) + " at sample offset " + std::to_string(start));
      }
      backward(params, x, t, n, cache, grads, config.parallel);
      update_running(params.bn1, cache.bn1, n);
      update_running(params.bn2, cache.bn2, n);

      ++step;
      auto gw = trainable(grads);
      const double lr = config.learning_rate;
      if (config.optimizer == OptimizerKind::kAdam) {
        const double c1 = 1.0 - std::pow(config.adam_beta1, double(step));
        const double c2 = 1.0 - std::pow(config.adam_beta2, double(step));
        for (std::size_t ti = 0; ti < weights.size(); ++ti) {
          for (std::size_t k = 0; k < weights[ti].size(); ++k) {
            const double g = gw[ti][k];
            m[ti][k] = config.adam_beta1 * m[ti][k] + (1.0 - config.adam_beta1) * g;
            v[ti][k] = config.adam_beta2 * v[ti][k] + (1.0 - config.adam_beta2) * g * g;
            weights[ti][k] -=
                lr * (m[ti][k] / c1) / (std::sqrt(v[ti][k] / c2) + config.adam_epsilon);
          }
        }
      } else {
        for (std::size_t ti = 0; ti < weights.size(); ++ti) {
          for (std::size_t k = 0; k < weights[ti].size(); ++k) weights[ti][k] -= lr * gw[ti][k];
        }
      }
      loss_sum += loss * double(n);
      seen += n;
    }
    if (seen == 0) throw InvalidInput("regressor training needs at least two samples");
    result.loss_history.push_back(loss_sum / double(seen));
  }
  return result;
}

BBox jitter_box(const BBox& box, std::span<const double, 4> u, double shift, double scale_min,
                double scale_max, double image_w, double image_h) {
  const double w = box.width(), h = box.height();
  const double cx = 0.5 * (box.x_min + box.x_max) + (2.0 * u[0] - 1.0) * shift * w;
  const double cy = 0.5 * (box.y_min + box.y_max) + (2.0 * u[1] - 1.0) * shift * h;
  const double nw = w * (scale_min + u[2] * (scale_max - scale_min));
  const double nh = h * (scale_min + u[3] * (scale_max - scale_min));
  return clamp_to_image({cx - 0.5 * nw, cy - 0.5 * nh, cx + 0.5 * nw, cy + 0.5 * nh}, image_w,
                        image_h);
}

std::vector<TrainingPair> build_training_pairs(std::span<const PseudoLabel> labels,
                                               EmbeddingProvider& provider,
                                               const ImageLookup& images,
                                               const TrainConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::map<std::string, EmbeddingVector> image_embeddings;
  std::vector<TrainingPair> out;
  for (const auto& label : labels) {
    const ImageRef image = images(label.image_id);
    const double w = image.width(), h = image.height();
    if (w <= 0 || h <= 0) throw InvalidInput("image " + label.image_id + " has no pixels");
    auto it = image_embeddings.find(label.image_id);
    if (it == image_embeddings.end()) {
      it = image_embeddings.emplace(label.image_id, provider.embed_image(image)).first;
    }
    const NormalizedBBox target = normalize(label.box, w, h);

    std::vector<BBox> inputs{label.box};
    for (std::size_t j = 0; j < config.jitters; ++j) {
      std::array<double, 4> u{};
      for (double& x : u) x = unit_uniform(rng);
      try {
        inputs.push_back(jitter_box(label.box, u, config.jitter_shift, config.jitter_scale_min,
                                    config.jitter_scale_max, w, h));
      } catch (const InvalidInput&) {
        // fell outside the image
      }
    }
    for (const auto& box : inputs) {
      try {
        auto region = provider.embed_region(image, box);
        out.push_back({regressor_features(region, it->second, normalize(box, w, h)), target});
      } catch (const InvalidInput& e) {
        log_warning("skipping training crop " + to_string(box) + " of " + label.image_id + ": " +
                    e.what());
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ScoredProposal apply_replacement(const ScoredProposal& original, const BBox& refined,
                                 const RefinementContext& context) {
  if (!context.provider) throw InvalidInput("refinement needs an embedding provider");
  if (!is_valid(refined) || iou_unchecked(refined, original.box) <= kReplacementIoU) {
    return original;
  }
  ScoredProposal candidate;
  try {
    candidate = score_box(*context.provider, context.image, refined, original.initial_score,
                          context.texts, context.selection.temperature, Provenance::kRefined);
  } catch (const Error& e) {
    log_warning("keeping proposal " + to_string(original.box) + " of " + context.image.id +
                ": refined box could not be embedded: " + e.what());
    return original;
  }
  if (!(candidate.entropy < original.entropy)) return original;
  candidate.objectness = objectness(candidate, context.normalizer, context.selection);
  return candidate;
}

std::vector<ScoredProposal> refine_proposals(const RegressorParams& params,
                                             std::span<const ScoredProposal> proposals,
                                             const RefinementContext& context) {
  params.validate();
  const double w = context.image.width(), h = context.image.height();
  if (w <= 0 || h <= 0) throw InvalidInput("refinement needs image dimensions");
  std::vector<double> features;
  for (const auto& p : proposals) {
    const auto row = regressor_features(p.embedding, context.image_embedding,
                                        normalize(p.box, w, h));
    features.insert(features.end(), row.begin(), row.end());
  }
  const auto outputs = predict(params, features, proposals.size());
  std::vector<ScoredProposal> out;
  out.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (outputs[i].degenerate) {
      out.push_back(proposals[i]);
      continue;
    }
    BBox box = denormalize(outputs[i].box, w, h);
    if (!is_valid(box)) {
      out.push_back(proposals[i]);
      continue;
    }
    out.push_back(apply_replacement(proposals[i], box, context));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.objectness.value_or(0.0) > b.objectness.value_or(0.0);
  });
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kRegressorMagic[4] = {'P', 'C', 'R', 'G'};
constexpr std::uint16_t kRegressorVersion = 1;
constexpr std::uint16_t kRegressorLayers = 3;

}  // namespace

std::vector<std::uint8_t> encode_regressor(const RegressorParams& params) {
  params.validate();
  std::vector<std::uint8_t> out(kRegressorMagic, kRegressorMagic + 4);
  binary::put_u16(out, kRegressorVersion);
  binary::put_u16(out, kRegressorLayers);
  for (std::size_t d : {params.input_dim(), params.fc1.out_dim, params.fc2.out_dim,
                        params.fc3.out_dim}) {
    binary::put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const auto& t : params.tensors()) {
    for (double v : t) binary::put_f32(out, static_cast<float>(v));
  }
  return out;
}

RegressorParams decode_regressor(std::span<const std::uint8_t> bytes) {
  binary::Reader r(bytes, "regressor file");
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kRegressorMagic)) {
    throw FormatError("not a regressor file: bad magic", "byte 0");
  }
  const auto version = r.u16("version");
  if (version != kRegressorVersion) {
    throw FormatError("unsupported regressor file version " + std::to_string(version), "byte 4");
  }
  const auto layers = r.u16("layer count");
  if (layers != kRegressorLayers) {
    throw FormatError("expected 3 layers, found " + std::to_string(layers), "byte 6");
  }
  std::array<std::uint32_t, 4> dims{};
  for (auto& d : dims) d = r.u32("layer width");
  if (dims[0] < 6 || (dims[0] - 4) % 2 != 0 || dims[1] == 0 || dims[2] == 0 || dims[3] != 4) {
    throw FormatError("invalid layer widths", "byte 8");
  }
  RegressorParams p;
  p.embedding_dim = (dims[0] - 4) / 2;
  p.fc1 = make_dense(dims[0], dims[1]);
  p.bn1 = make_bn(dims[1]);
  p.fc2 = make_dense(dims[1], dims[2]);
  p.bn2 = make_bn(dims[2]);
  p.fc3 = make_dense(dims[2], 4);
  std::size_t total = 0;
  for (const auto& t : p.tensors()) total += t.size();
  r.need(total * 4, "tensors");
  for (auto t : p.tensors()) {
    for (double& v : t) v = r.f32("tensor");
  }
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after regressor tensors", "byte " + std::to_string(r.offset()));
  }
  try {
    p.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("invalid regressor parameters: ") + e.what());
  }
  return p;
}

void save_regressor(const std::filesystem::path& path, const RegressorParams& params) {
  binary::write_file(path, encode_regressor(params));
}

RegressorParams load_regressor(const std::filesystem::path& path) {
  const auto bytes = binary::read_file(path);
  try {
    return decode_regressor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> loss_history) {
  std::ostringstream s;
  s.precision(17);
  s << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < loss_history.size(); ++i) s << i + 1 << ',' << loss_history[i] << '\n';
  const std::string text = s.str();
  binary::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                     text.size()));
}

}  // namespace pclip
