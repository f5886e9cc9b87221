// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparselab/graph.hpp"
#include "sparselab/tensor.hpp"

namespace sparselab {

enum class Variant { dense, topk, sparsemax, entmax15 };

/// When the configured sparse variant is active. train_only keeps it for
/// training steps and falls back to dense softmax for evaluation.
enum class SparsifyPhase { train_and_predict, train_only };

enum class Phase { train, eval };

/// k value meaning "keep every key": top-k degenerates to dense attention.
inline constexpr std::size_t kAllKeys = std::numeric_limits<std::size_t>::max();

std::string_view to_string(Variant v);
std::string_view to_string(SparsifyPhase p);
/// Throws ConfigError on unknown names.
Variant parse_variant(std::string_view name);
SparsifyPhase parse_sparsify_phase(std::string_view name);
/// "inf" maps to kAllKeys; otherwise a positive integer.
std::size_t parse_k(std::string_view text);
std::string k_to_string(std::size_t k);

struct AttentionConfig {
  Variant variant = Variant::topk;
  std::size_t k = 8;
  std::size_t num_heads = 1;
  std::size_t d_model = 64;
  SparsifyPhase sparsify_phase = SparsifyPhase::train_and_predict;
  bool causal = false;

  /// Throws ConfigError unless k >= 1, num_heads >= 1 and num_heads divides d_model.
  void validate() const;
  std::size_t head_dim() const { return d_model / num_heads; }
  Variant effective_variant(Phase phase) const {
    if (phase == Phase::eval && sparsify_phase == SparsifyPhase::train_only) {
      return Variant::dense;
    }
    return variant;
  }
};

/// Boolean matrix; true marks a position that must not be attended.
struct KeyMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> masked;

  bool operator()(std::size_t i, std::size_t j) const { return masked[i * cols + j] != 0; }
};

template <std::floating_point T>
struct AttentionOutput {
  Tensor<T> output;
  /// One [l_Q x l_K] matrix per head.
  std::vector<Tensor<T>> weights;
};

/// Per-row k-th largest finite score.
template <std::floating_point T>
using ThresholdVector = std::vector<T>;

// ---------------------------------------------------------------------------
// Dense kernels

/// Q K^T / sqrt(d') with d' the shared width of Q and K.
template <std::floating_point T>
Tensor<T> attention_scores(const Tensor<T>& q, const Tensor<T>& k);

/// t_i = k-th largest finite value of row i, or the row's minimum finite value
/// when it has fewer than k finite entries. O(n) per row via selection.
template <std::floating_point T>
ThresholdVector<T> row_thresholds(const Tensor<T>& p, std::size_t k);

/// Keeps P_ij >= t_i and sets every other entry to -inf. Entries already -inf
/// stay -inf and never count toward the k. Ties at the threshold all survive,
/// so a row may keep more than k entries.
template <std::floating_point T>
Tensor<T> topk_mask(const Tensor<T>& p, std::size_t k);

/// dP = dM on kept positions, 0 elsewhere; thresholds are constants.
template <std::floating_point T>
Tensor<T> topk_backward(const Tensor<T>& dm, const Tensor<T>& p, std::size_t k);

/// Sets causal (j > i) and padded positions to -inf.
template <std::floating_point T>
Tensor<T> apply_structural_mask(const Tensor<T>& p, bool causal,
                                const KeyMask* pad_mask = nullptr);

/// Euclidean projection of each row onto the probability simplex. -inf
/// entries are excluded and map to 0.
template <std::floating_point T>
Tensor<T> sparsemax_rows(const Tensor<T>& x);

/// dX = s * (dY - mean over s of dY), s the support of the forward output y.
template <std::floating_point T>
Tensor<T> sparsemax_rows_backward(const Tensor<T>& y, const Tensor<T>& dy);

/// 1.5-entmax: p_i = max(0, x_i/2 - tau)^2 with tau chosen so the row sums
/// to one, found exactly from the sorted row. -inf entries map to 0.
template <std::floating_point T>
Tensor<T> entmax15_rows(const Tensor<T>& x);

/// dX = g * dY - g * <g, dY> / sum(g) with g = sqrt(y).
template <std::floating_point T>
Tensor<T> entmax15_rows_backward(const Tensor<T>& y, const Tensor<T>& dy);

/// Turns a score matrix into attention weights for the given variant.
template <std::floating_point T>
Tensor<T> normalize_rows(const Tensor<T>& scores, Variant variant, std::size_t k);

/// softmax(topk_mask(Q K^T / sqrt(d'), k)) V.
template <std::floating_point T>
AttentionOutput<T> sparse_attention(const Tensor<T>& q, const Tensor<T>& k,
                                    const Tensor<T>& v, std::size_t top_k);

/// Single-head attention for any variant, with optional causal masking.
template <std::floating_point T>
AttentionOutput<T> single_head_attention(const Tensor<T>& q, const Tensor<T>& k,
                                         const Tensor<T>& v, Variant variant,
                                         std::size_t top_k, bool causal = false);

// ---------------------------------------------------------------------------
// Differentiable versions

namespace ops {

template <std::floating_point T>
Var<T> topk_mask(Var<T> scores, std::size_t k);

template <std::floating_point T>
Var<T> structural_mask(Var<T> scores, bool causal, const KeyMask* pad_mask = nullptr);

template <std::floating_point T>
Var<T> sparsemax_rows(Var<T> x);

template <std::floating_point T>
Var<T> entmax15_rows(Var<T> x);

/// Variant-specific normalization of a score matrix.
template <std::floating_point T>
Var<T> normalize(Var<T> scores, Variant variant, std::size_t k);

}  // namespace ops

/// Projection matrices of one attention block, all d x d. Inputs are rows, so
/// Q = x W_Q.
template <std::floating_point T>
struct AttentionParams {
  Var<T> w_q, w_k, w_v, w_c;
};

template <std::floating_point T>
struct AttentionResult {
  /// [batch*l_Q x d]
  Var<T> output;
  /// Sequence-major, then head: weights[s * g + h] is [l_Q x l_K]. Empty
  /// unless requested.
  std::vector<Tensor<T>> weights;
};

/// Scaled attention over already-projected q [batch*l_Q x d], k, v
/// [batch*l_K x d]: split into g heads of width d/g, per head per sequence
/// apply structural masks, the phase-effective variant and the value average,
/// then concatenate heads. No output projection.
template <std::floating_point T>
AttentionResult<T> attend_heads(Var<T> q, Var<T> k, Var<T> v, std::size_t batch,
                                const AttentionConfig& config, Phase phase,
                                bool keep_weights = false);

/// Full multi-head attention: projections, attend_heads, output projection
/// W_c. Self-attention passes the same sequence as x_q and x_kv; context
/// attention passes decoder states as x_q and encoder output as x_kv.
/// `batch` equal-length sequences may be stacked along rows.
template <std::floating_point T>
AttentionResult<T> multi_head_attention(Var<T> x_q, Var<T> x_kv,
                                        const AttentionParams<T>& params,
                                        const AttentionConfig& config,
                                        Phase phase = Phase::train,
                                        std::size_t batch = 1,
                                        bool keep_weights = false);

}  // namespace sparselab
