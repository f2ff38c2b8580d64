// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels. Parallel benchmarks take the thread
// count as their argument.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pclip/kernels.hpp"

namespace k = pclip::kernels;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<double> random_doubles(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Serial benchmarks take no argument and run on one thread.
template <bool Parallel>
int threads_of(const benchmark::State& state) {
  if constexpr (Parallel) return int(state.range(0));
  return 1;
}

constexpr int kW = 640, kH = 480;

template <bool Parallel>
void BM_Sobel(benchmark::State& state) {
  const k::ThreadScope scope(threads_of<Parallel>(state));
  auto gray = random_floats(std::size_t(kW) * kH, 1);
  for (auto& x : gray) x = 0.5f * (x + 1.0f);
  std::vector<float> out(gray.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::sobel_magnitude(gray, kW, kH, out);
    } else {
      k::serial::sobel_magnitude(gray, kW, kH, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_WindowScores(benchmark::State& state) {
  const k::ThreadScope scope(threads_of<Parallel>(state));
  auto edges = random_floats(std::size_t(kW) * kH, 2);
  for (auto& x : edges) x = x * x;
  const auto integral = k::integral_image(edges, kW, kH);
  std::vector<k::Window> windows;
  for (int s : {32, 64, 128, 256})
    for (int y = 0; y + s <= kH; y += s / 4)
      for (int x = 0; x + s <= kW; x += s / 4) windows.push_back({x, y, x + s, y + s, s / 8});
  std::vector<double> out(windows.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::window_scores(integral, windows, out);
    } else {
      k::serial::window_scores(integral, windows, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(windows.size()));
}

template <bool Parallel>
void BM_CosineMatrix(benchmark::State& state) {
  const k::ThreadScope scope(threads_of<Parallel>(state));
  const std::size_t m = 300, c = 80, dim = 512;
  const auto rows = random_floats(m * dim, 3), cols = random_floats(c * dim, 4);
  std::vector<double> out(m * c);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::cosine_matrix(rows, cols, dim, out);
    } else {
      k::serial::cosine_matrix(rows, cols, dim, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_PairwiseEdges(benchmark::State& state) {
  const k::ThreadScope scope(threads_of<Parallel>(state));
  const std::size_t n = 180, dim = 512;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 400.0);
  std::vector<pclip::BBox> boxes(n);
  for (auto& b : boxes) {
    const double x = u(rng), y = u(rng);
    b = {x, y, x + 20 + 0.5 * u(rng), y + 20 + 0.5 * u(rng)};
  }
  const auto features = random_floats(n * dim, 6);
  std::vector<std::uint8_t> adjacency(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::pairwise_edges(boxes, features, dim, 0.5, 0.0, adjacency);
    } else {
      k::serial::pairwise_edges(boxes, features, dim, 0.5, 0.0, adjacency);
    }
    benchmark::DoNotOptimize(adjacency.data());
  }
}

template <bool Parallel>
void BM_DenseForwardBackward(benchmark::State& state) {
  const k::ThreadScope scope(threads_of<Parallel>(state));
  const std::size_t batch = 64, in_dim = 1028, out_dim = 512;
  const auto in = random_doubles(batch * in_dim, 7), weight = random_doubles(out_dim * in_dim, 8);
  const auto bias = random_doubles(out_dim, 9), grad_out = random_doubles(batch * out_dim, 10);
  std::vector<double> out(batch * out_dim), gw(weight.size()), gb(out_dim), gi(in.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::dense_forward(in, batch, in_dim, weight, bias, out_dim, out);
      k::parallel::dense_backward(in, batch, in_dim, weight, out_dim, grad_out, gw, gb, gi);
    } else {
      k::serial::dense_forward(in, batch, in_dim, weight, bias, out_dim, out);
      k::serial::dense_backward(in, batch, in_dim, weight, out_dim, grad_out, gw, gb, gi);
    }
    benchmark::DoNotOptimize(out.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

void thread_counts(benchmark::internal::Benchmark* b) {
  for (int t = 1; t <= std::max(1, k::max_threads()); t *= 2) b->Arg(t);
}

}  // namespace

BENCHMARK(BM_Sobel<false>)->Name("serial/sobel");
BENCHMARK(BM_Sobel<true>)->Name("parallel/sobel")->Apply(thread_counts);
BENCHMARK(BM_WindowScores<false>)->Name("serial/window_scores");
BENCHMARK(BM_WindowScores<true>)->Name("parallel/window_scores")->Apply(thread_counts);
BENCHMARK(BM_CosineMatrix<false>)->Name("serial/cosine_matrix");
BENCHMARK(BM_CosineMatrix<true>)->Name("parallel/cosine_matrix")->Apply(thread_counts);
BENCHMARK(BM_PairwiseEdges<false>)->Name("serial/pairwise_edges");
BENCHMARK(BM_PairwiseEdges<true>)->Name("parallel/pairwise_edges")->Apply(thread_counts);
BENCHMARK(BM_DenseForwardBackward<false>)->Name("serial/dense_fwd_bwd");
BENCHMARK(BM_DenseForwardBackward<true>)->Name("parallel/dense_fwd_bwd")->Apply(thread_counts);

BENCHMARK_MAIN();
