// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparselab/attention.hpp"
#include "sparselab/tensor.hpp"

namespace sparselab {

inline constexpr std::size_t kMinBenchIters = 30;
inline constexpr std::size_t kMinBenchWarmup = 5;

struct BenchShape {
  std::size_t batch = 8;
  std::size_t l_q = 64;
  std::size_t l_k = 64;
  std::size_t d = 64;
  std::size_t g = 4;
  std::size_t k = 8;

  void validate() const;
};

enum class BenchMode { forward, forward_backward };
std::string_view to_string(BenchMode m);
BenchMode parse_bench_mode(std::string_view name);

struct BenchRecord {
  Variant variant = Variant::dense;
  BenchShape shape;
  BenchMode mode = BenchMode::forward;
  DType dtype = DType::f32;
  std::size_t iters = 0;
  std::size_t warmup = 0;
  double median_s = 0;
  double mean_s = 0;
  double std_s = 0;  ///< sample standard deviation
  double tokens_per_s = 0;  ///< batch * l_Q / mean_s
  double checksum = 0;  ///< sum of the last timed output
};

/// Output sum of attend_heads on the inputs the benchmark generates for
/// (shape, seed). The benchmark reports the same value for its runs.
template <std::floating_point T>
double attention_checksum(Variant variant, const BenchShape& shape, std::uint64_t seed = 1);

/// Times attend_heads (plus its backward pass for forward_backward) on
/// pre-generated q, k, v of shape [batch*l x d]. Each sample is one call on a
/// fresh graph, measured with a monotonic clock. Throws ConfigError if
/// iters < 30 or warmup < 5.
template <std::floating_point T>
BenchRecord bench_attention(Variant variant, const BenchShape& shape, BenchMode mode,
                            std::size_t iters, std::size_t warmup, std::uint64_t seed = 1);

/// Cross product over shapes, variants and modes, in that nesting order.
template <std::floating_point T>
std::vector<BenchRecord> bench_suite(std::span<const BenchShape> shapes,
                                     std::span<const Variant> variants,
                                     std::span<const BenchMode> modes, std::size_t iters,
                                     std::size_t warmup, std::uint64_t seed = 1);

/// Columns: variant,batch,l_Q,l_K,d,g,k,mode,dtype,iters,median_s,mean_s,
/// std_s,tokens_per_s. The header is always present.
std::string bench_csv(std::span<const BenchRecord> records);

}  // namespace sparselab
