// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>

#include <benchmark/benchmark.h>

#include "sparselab/attention.hpp"
#include "sparselab/bench.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {
namespace {

constexpr std::size_t kK = 8;

Tensor<float> scores(std::size_t l) {
  Rng rng(7);
  return random_uniform<float>({l, l}, -3, 3, rng);
}

void BM_Normalize(benchmark::State& state, Variant variant) {
  const Tensor<float> p = scores(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(normalize_rows(p, variant, kK));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_Normalize, dense, Variant::dense)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_Normalize, topk, Variant::topk)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_Normalize, sparsemax, Variant::sparsemax)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_Normalize, entmax15, Variant::entmax15)->Arg(64)->Arg(256);

void BM_RowThresholds(benchmark::State& state) {
  const Tensor<float> p = scores(256);
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(row_thresholds(p, k));
}
BENCHMARK(BM_RowThresholds)->Arg(1)->Arg(8)->Arg(16)->Arg(32)->Arg(128);

void BM_MultiHead(benchmark::State& state, Variant variant, BenchMode mode) {
  BenchShape shape;
  shape.l_q = static_cast<std::size_t>(state.range(0));
  shape.l_k = shape.l_q;
  shape.k = kK;
  // bench_attention times its own iterations; report its median per call.
  for (auto _ : state) {
    const BenchRecord r = bench_attention<float>(variant, shape, mode, 30, 5);
    state.SetIterationTime(r.median_s);
  }
}
BENCHMARK_CAPTURE(BM_MultiHead, dense_fwd_bwd, Variant::dense, BenchMode::forward_backward)
    ->Arg(64)->Arg(256)->UseManualTime()->Iterations(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MultiHead, topk_fwd_bwd, Variant::topk, BenchMode::forward_backward)
    ->Arg(64)->Arg(256)->UseManualTime()->Iterations(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MultiHead, sparsemax_fwd_bwd, Variant::sparsemax, BenchMode::forward_backward)
    ->Arg(64)->Arg(256)->UseManualTime()->Iterations(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace sparselab

// The packaged benchmark_main archive is LTO bytecode tied to another compiler
// release, so the entry point is defined here.
BENCHMARK_MAIN();
