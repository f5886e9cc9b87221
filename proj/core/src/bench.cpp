// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparselab/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "sparselab/errors.hpp"
#include "sparselab/graph.hpp"
#include "sparselab/io.hpp"
#include "sparselab/ops.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

void BenchShape::validate() const {
  if (batch == 0 || l_q == 0 || l_k == 0 || d == 0 || g == 0 || k == 0) {
    throw ConfigError("bench shape extents must be positive");
  }
  if (d % g != 0) throw ConfigError("d must be divisible by g");
}

std::string_view to_string(BenchMode m) {
  return m == BenchMode::forward ? "forward" : "forward_backward";
}

BenchMode parse_bench_mode(std::string_view name) {
  if (name == "forward") return BenchMode::forward;
  if (name == "forward_backward") return BenchMode::forward_backward;
  throw ConfigError("unknown bench mode '" + std::string(name) + "'");
}

namespace {

template <class T>
struct Inputs {
  Tensor<T> q, k, v;
  AttentionConfig config;
};

template <class T>
Inputs<T> make_inputs(Variant variant, const BenchShape& shape, std::uint64_t seed) {
  shape.validate();
  Rng rng = Rng::substream(seed, "bench");
  Inputs<T> in{random_uniform<T>({shape.batch * shape.l_q, shape.d}, T(-1), T(1), rng),
               random_uniform<T>({shape.batch * shape.l_k, shape.d}, T(-1), T(1), rng),
               random_uniform<T>({shape.batch * shape.l_k, shape.d}, T(-1), T(1), rng),
               {}};
  in.config.variant = variant;
  in.config.k = shape.k;
  in.config.num_heads = shape.g;
  in.config.d_model = shape.d;
  in.config.validate();
  return in;
}

// One call of the timed region; returns the output sum.
template <class T>
double run_once(const Inputs<T>& in, std::size_t batch, bool backward) {
  Graph<T> g;
  const Var<T> q = backward ? g.leaf(in.q) : g.constant(in.q);
  const Var<T> k = backward ? g.leaf(in.k) : g.constant(in.k);
  const Var<T> v = backward ? g.leaf(in.v) : g.constant(in.v);
  const Var<T> out = attend_heads(q, k, v, batch, in.config, Phase::train).output;
  const Var<T> total = ops::sum(out);
  double checksum = static_cast<double>(total.value()[0]);
  if (backward) {
    const auto grads = g.backward(total);
    checksum += static_cast<double>(grads[q][0]);
  }
  return checksum;
}

}  // namespace

template <std::floating_point T>
double attention_checksum(Variant variant, const BenchShape& shape, std::uint64_t seed) {
  return run_once(make_inputs<T>(variant, shape, seed), shape.batch, false);
}

template <std::floating_point T>
BenchRecord bench_attention(Variant variant, const BenchShape& shape, BenchMode mode,
                            std::size_t iters, std::size_t warmup, std::uint64_t seed) {
  if (iters < kMinBenchIters) throw ConfigError("iters must be >= 30");
  if (warmup < kMinBenchWarmup) throw ConfigError("warmup must be >= 5");
  const Inputs<T> in = make_inputs<T>(variant, shape, seed);
  const bool backward = mode == BenchMode::forward_backward;

  volatile double sink = 0;
  for (std::size_t i = 0; i < warmup; ++i) sink = sink + run_once(in, shape.batch, backward);

  using Clock = std::chrono::steady_clock;
  std::vector<double> samples(iters);
  double checksum = 0;
  for (double& s : samples) {
    const auto t0 = Clock::now();
    checksum = run_once(in, shape.batch, backward);
    s = std::chrono::duration<double>(Clock::now() - t0).count();
    sink = sink + checksum;
  }

  BenchRecord r;
  r.variant = variant;
  r.shape = shape;
  r.mode = mode;
  r.dtype = dtype_of<T>();
  r.iters = iters;
  r.warmup = warmup;
  r.checksum = checksum;
  double sum = 0;
  for (double s : samples) sum += s;
  r.mean_s = sum / static_cast<double>(iters);
  double sq = 0;
  for (double s : samples) sq += (s - r.mean_s) * (s - r.mean_s);
  r.std_s = std::sqrt(sq / static_cast<double>(iters - 1));
  std::sort(samples.begin(), samples.end());
  r.median_s = iters % 2 ? samples[iters / 2]
                         : 0.5 * (samples[iters / 2 - 1] + samples[iters / 2]);
  r.tokens_per_s = static_cast<double>(shape.batch * shape.l_q) / r.mean_s;
  return r;
}

template <std::floating_point T>
std::vector<BenchRecord> bench_suite(std::span<const BenchShape> shapes,
                                     std::span<const Variant> variants,
                                     std::span<const BenchMode> modes, std::size_t iters,
                                     std::size_t warmup, std::uint64_t seed) {
  if (shapes.empty() || variants.empty() || modes.empty()) {
    throw ConfigError("bench suite needs at least one shape, variant and mode");
  }
  std::vector<BenchRecord> out;
  for (const BenchShape& s : shapes) {
    for (Variant v : variants) {
      for (BenchMode m : modes) out.push_back(bench_attention<T>(v, s, m, iters, warmup, seed));
    }
  }
  return out;
}

std::string bench_csv(std::span<const BenchRecord> records) {
  CsvTable t({"variant", "batch", "l_Q", "l_K", "d", "g", "k", "mode", "dtype", "iters",
              "median_s", "mean_s", "std_s", "tokens_per_s"});
  for (const BenchRecord& r : records) {
    t.add_row({std::string(to_string(r.variant)), std::to_string(r.shape.batch),
               std::to_string(r.shape.l_q), std::to_string(r.shape.l_k),
               std::to_string(r.shape.d), std::to_string(r.shape.g), k_to_string(r.shape.k),
               std::string(to_string(r.mode)), std::string(dtype_name(r.dtype)),
               std::to_string(r.iters), format_real(r.median_s), format_real(r.mean_s),
               format_real(r.std_s), format_real(r.tokens_per_s)});
  }
  return t.str();
}

#define SPARSELAB_INSTANTIATE(T)                                                            \
  template double attention_checksum<T>(Variant, const BenchShape&, std::uint64_t);         \
  template BenchRecord bench_attention<T>(Variant, const BenchShape&, BenchMode,            \
                                          std::size_t, std::size_t, std::uint64_t);         \
  template std::vector<BenchRecord> bench_suite<T>(                                         \
      std::span<const BenchShape>, std::span<const Variant>, std::span<const BenchMode>,    \
      std::size_t, std::size_t, std::uint64_t);
SPARSELAB_INSTANTIATE(float)
SPARSELAB_INSTANTIATE(double)
#undef SPARSELAB_INSTANTIATE

}  // namespace sparselab
