// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparselab/attention.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <string>

#include "sparselab/numerics.hpp"
#include "sparselab/ops.hpp"

namespace sparselab {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::dense: return "dense";
    case Variant::topk: return "topk";
    case Variant::sparsemax: return "sparsemax";
    case Variant::entmax15: return "entmax15";
  }
  return "?";
}

std::string_view to_string(SparsifyPhase p) {
  return p == SparsifyPhase::train_only ? "train_only" : "train_and_predict";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::dense, Variant::topk, Variant::sparsemax, Variant::entmax15}) {
    if (name == to_string(v)) return v;
  }
  throw ConfigError("unknown attention variant '" + std::string(name) + "'");
}

SparsifyPhase parse_sparsify_phase(std::string_view name) {
  if (name == "train_and_predict") return SparsifyPhase::train_and_predict;
  if (name == "train_only") return SparsifyPhase::train_only;
  throw ConfigError("unknown sparsify phase '" + std::string(name) + "'");
}

std::size_t parse_k(std::string_view text) {
  if (text == "inf") return kAllKeys;
  std::size_t k = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
  if (ec != std::errc() || ptr != text.data() + text.size() || k == 0 ||
      k == kAllKeys) {
    throw ConfigError("k must be a positive integer or 'inf', got '" +
                      std::string(text) + "'");
  }
  return k;
}

std::string k_to_string(std::size_t k) {
  return k == kAllKeys ? "inf" : std::to_string(k);
}

void AttentionConfig::validate() const {
  if (k == 0) throw ConfigError("k must be >= 1");
  if (num_heads == 0) throw ConfigError("num_heads must be >= 1");
  if (d_model == 0 || d_model % num_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) +
                      ") must be a positive multiple of num_heads (" +
                      std::to_string(num_heads) + ")");
  }
}

namespace {

template <class T>
bool is_masked(T v) {
  return v == neg_inf<T>();
}

// Threshold of one row; `scratch` is reused across rows. Small k keeps a
// sorted buffer of the k largest values seen, which beats selection when
// k is much smaller than the row.
template <class T>
T row_threshold(std::span<const T> row, std::size_t k, std::vector<T>& scratch,
                std::size_t row_index) {
  constexpr std::size_t kBufferLimit = 16;
  scratch.clear();
  std::size_t finite = 0;
  if (k <= kBufferLimit) {
    // scratch holds up to k values in descending order.
    for (T v : row) {
      if (is_masked(v)) continue;
      ++finite;
      if (scratch.size() == k) {
        if (!(v > scratch.back())) continue;
        scratch.pop_back();
      }
      auto pos = std::upper_bound(scratch.begin(), scratch.end(), v, std::greater<T>());
      scratch.insert(pos, v);
    }
    if (finite == 0) {
      throw DegenerateRowError("topk: row " + std::to_string(row_index) +
                               " has no finite entry");
    }
    return scratch.back();
  }
  for (T v : row) {
    if (!is_masked(v)) scratch.push_back(v);
  }
  if (scratch.empty()) {
    throw DegenerateRowError("topk: row " + std::to_string(row_index) +
                             " has no finite entry");
  }
  if (scratch.size() <= k) return *std::min_element(scratch.begin(), scratch.end());
  const auto nth = scratch.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(scratch.begin(), nth, scratch.end(), std::greater<T>());
  return *nth;
}

template <class T>
void require_k(std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
}

}  // namespace

template <std::floating_point T>
Tensor<T> attention_scores(const Tensor<T>& q, const Tensor<T>& k) {
  if (q.cols() != k.cols()) {
    throw DimensionError("attention_scores: query width " + std::to_string(q.cols()) +
                         " vs key width " + std::to_string(k.cols()));
  }
  Tensor<T> p = matmul_nt(q, k);
  const T factor = T(1) / std::sqrt(static_cast<T>(q.cols()));
  for (T& v : p.values()) v *= factor;
  return p;
}

template <std::floating_point T>
ThresholdVector<T> row_thresholds(const Tensor<T>& p, std::size_t k) {
  require_k<T>(k);
  ThresholdVector<T> t(p.rows());
  std::vector<T> scratch;
  scratch.reserve(p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) t[i] = row_threshold(p.row(i), k, scratch, i);
  return t;
}

template <std::floating_point T>
Tensor<T> topk_mask(const Tensor<T>& p, std::size_t k) {
  require_k<T>(k);
  Tensor<T> m = p;
  std::vector<T> scratch;
  scratch.reserve(p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const T t = row_threshold(p.row(i), k, scratch, i);
    for (T& v : m.row(i)) {
      if (!(v >= t)) v = neg_inf<T>();
    }
  }
  return m;
}

template <std::floating_point T>
Tensor<T> topk_backward(const Tensor<T>& dm, const Tensor<T>& p, std::size_t k) {
  if (!dm.same_shape(p)) {
    throw DimensionError("topk_backward: gradient " + shape_string(dm.shape()) +
                         " vs scores " + shape_string(p.shape()));
  }
  const ThresholdVector<T> t = row_thresholds(p, k);
  Tensor<T> dp = dm;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto pr = p.row(i);
    auto dr = dp.row(i);
    for (std::size_t j = 0; j < pr.size(); ++j) {
      if (is_masked(pr[j]) || !(pr[j] >= t[i])) dr[j] = T(0);
    }
  }
  return dp;
}

template <std::floating_point T>
Tensor<T> apply_structural_mask(const Tensor<T>& p, bool causal, const KeyMask* pad_mask) {
  if (pad_mask && (pad_mask->rows != p.rows() || pad_mask->cols != p.cols() ||
                   pad_mask->masked.size() != p.size())) {
    throw DimensionError("apply_structural_mask: pad mask " +
                         std::to_string(pad_mask->rows) + "x" +
                         std::to_string(pad_mask->cols) + " vs scores " +
                         shape_string(p.shape()));
  }
  Tensor<T> out = p;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if ((causal && j > i) || (pad_mask && (*pad_mask)(i, j))) r[j] = neg_inf<T>();
    }
  }
  return out;
}

template <std::floating_point T>
Tensor<T> sparsemax_rows(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  std::vector<T> z;
  z.reserve(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    z.clear();
    for (T v : in) {
      if (!is_masked(v)) z.push_back(v);
    }
    if (z.empty()) {
      throw DegenerateRowError("sparsemax: row " + std::to_string(i) + " has no finite entry");
    }
    std::sort(z.begin(), z.end(), std::greater<T>());
    // Support size is the largest j with 1 + j*z_j > sum_{l<=j} z_l.
    T cumsum = 0, tau_sum = z[0];
    std::size_t support = 1;
    for (std::size_t j = 0; j < z.size(); ++j) {
      cumsum += z[j];
      if (T(1) + static_cast<T>(j + 1) * z[j] > cumsum) {
        support = j + 1;
        tau_sum = cumsum;
      }
    }
    const T tau = (tau_sum - T(1)) / static_cast<T>(support);
    auto out = y.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = is_masked(in[j]) ? T(0) : std::max(in[j] - tau, T(0));
    }
  }
  return y;
}

template <std::floating_point T>
Tensor<T> sparsemax_rows_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  if (!y.same_shape(dy)) throw DimensionError("sparsemax_rows_backward: shape mismatch");
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto yr = y.row(i);
    const auto gr = dy.row(i);
    T total = 0;
    std::size_t support = 0;
    for (std::size_t j = 0; j < yr.size(); ++j) {
      if (yr[j] > T(0)) {
        total += gr[j];
        ++support;
      }
    }
    const T mean = support ? total / static_cast<T>(support) : T(0);
    auto out = dx.row(i);
    for (std::size_t j = 0; j < yr.size(); ++j) {
      out[j] = yr[j] > T(0) ? gr[j] - mean : T(0);
    }
  }
  return dx;
}

template <std::floating_point T>
Tensor<T> entmax15_rows(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  std::vector<T> z;
  z.reserve(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    T hi = neg_inf<T>();
    for (T v : in) {
      if (!is_masked(v)) hi = std::max(hi, v);
    }
    if (hi == neg_inf<T>()) {
      throw DegenerateRowError("entmax15: row " + std::to_string(i) + " has no finite entry");
    }
    // Work on x/2 shifted so the maximum is 0.
    z.clear();
    for (T v : in) {
      if (!is_masked(v)) z.push_back((v - hi) / T(2));
    }
    std::sort(z.begin(), z.end(), std::greater<T>());
    // For support size s: tau(s) solves sum_{j<=s} (z_j - tau)^2 = 1, i.e.
    // tau = mean - sqrt((1 - s*var) / s). The support is the largest s with
    // tau(s) <= z_s.
    T sum = 0, sum_sq = 0, tau_star = z[0] - T(1);
    for (std::size_t j = 0; j < z.size(); ++j) {
      sum += z[j];
      sum_sq += z[j] * z[j];
      const T s = static_cast<T>(j + 1);
      const T mean = sum / s;
      const T ss = s * (sum_sq / s - mean * mean);
      const T delta = std::max((T(1) - ss) / s, T(0));
      const T tau = mean - std::sqrt(delta);
      if (tau <= z[j]) tau_star = tau;
    }
    auto out = y.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) {
      if (is_masked(in[j])) {
        out[j] = T(0);
        continue;
      }
      const T d = std::max((in[j] - hi) / T(2) - tau_star, T(0));
      out[j] = d * d;
    }
  }
  return y;
}

template <std::floating_point T>
Tensor<T> entmax15_rows_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  if (!y.same_shape(dy)) throw DimensionError("entmax15_rows_backward: shape mismatch");
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto yr = y.row(i);
    const auto gr = dy.row(i);
    auto out = dx.row(i);
    T g_sum = 0, dot = 0;
    for (std::size_t j = 0; j < yr.size(); ++j) {
      const T g = std::sqrt(yr[j]);
      out[j] = g * gr[j];
      g_sum += g;
      dot += out[j];
    }
    const T q = g_sum > T(0) ? dot / g_sum : T(0);
    for (std::size_t j = 0; j < yr.size(); ++j) out[j] -= q * std::sqrt(yr[j]);
  }
  return dx;
}

template <std::floating_point T>
Tensor<T> normalize_rows(const Tensor<T>& scores, Variant variant, std::size_t k) {
  switch (variant) {
    case Variant::dense: return softmax_rows(scores);
    case Variant::topk: return softmax_rows(topk_mask(scores, k));
    case Variant::sparsemax: return sparsemax_rows(scores);
    case Variant::entmax15: return entmax15_rows(scores);
  }
  throw ConfigError("unknown variant");
}

template <std::floating_point T>
AttentionOutput<T> single_head_attention(const Tensor<T>& q, const Tensor<T>& k,
                                         const Tensor<T>& v, Variant variant,
                                         std::size_t top_k, bool causal) {
  if (k.rows() != v.rows()) {
    throw DimensionError("attention: " + std::to_string(k.rows()) + " keys vs " +
                         std::to_string(v.rows()) + " values");
  }
  Tensor<T> p = attention_scores(q, k);
  if (causal) p = apply_structural_mask(p, true);
  Tensor<T> a = normalize_rows(p, variant, top_k);
  AttentionOutput<T> out;
  out.output = matmul(a, v);
  out.weights.push_back(std::move(a));
  return out;
}

template <std::floating_point T>
AttentionOutput<T> sparse_attention(const Tensor<T>& q, const Tensor<T>& k,
                                    const Tensor<T>& v, std::size_t top_k) {
  return single_head_attention(q, k, v, Variant::topk, top_k, false);
}

namespace ops {

// Kept positions are exactly the finite entries of the forward output, so
// the backward pass reads them from there instead of reselecting.
template <std::floating_point T>
Var<T> topk_mask(Var<T> scores, std::size_t k) {
  Graph<T>& g = *scores.graph;
  const std::size_t out_id = g.size();
  return g.record(OpKind::topk_mask, sparselab::topk_mask(scores.value(), k), {scores.id},
                  [&g, out_id](const Tensor<T>& dm) {
                    const Tensor<T>& kept = g.value(out_id);
                    std::vector<Tensor<T>> out{dm};
                    for (std::size_t i = 0; i < kept.size(); ++i) {
                      if (is_masked(kept[i])) out[0][i] = T(0);
                    }
                    return out;
                  });
}

template <std::floating_point T>
Var<T> structural_mask(Var<T> scores, bool causal, const KeyMask* pad_mask) {
  Graph<T>& g = *scores.graph;
  const std::size_t out_id = g.size();
  return g.record(OpKind::structural_mask,
                  sparselab::apply_structural_mask(scores.value(), causal, pad_mask),
                  {scores.id}, [&g, out_id](const Tensor<T>& dc) {
                    const Tensor<T>& masked = g.value(out_id);
                    std::vector<Tensor<T>> out{dc};
                    for (std::size_t i = 0; i < masked.size(); ++i) {
                      if (is_masked(masked[i])) out[0][i] = T(0);
                    }
                    return out;
                  });
}

template <std::floating_point T>
Var<T> sparsemax_rows(Var<T> x) {
  Graph<T>& g = *x.graph;
  const std::size_t out_id = g.size();
  return g.record(OpKind::sparsemax_rows, sparselab::sparsemax_rows(x.value()), {x.id},
                  [&g, out_id](const Tensor<T>& dy) {
                    std::vector<Tensor<T>> out;
                    out.push_back(sparselab::sparsemax_rows_backward(g.value(out_id), dy));
                    return out;
                  });
}

template <std::floating_point T>
Var<T> entmax15_rows(Var<T> x) {
  Graph<T>& g = *x.graph;
  const std::size_t out_id = g.size();
  return g.record(OpKind::entmax15_rows, sparselab::entmax15_rows(x.value()), {x.id},
                  [&g, out_id](const Tensor<T>& dy) {
                    std::vector<Tensor<T>> out;
                    out.push_back(sparselab::entmax15_rows_backward(g.value(out_id), dy));
                    return out;
                  });
}

template <std::floating_point T>
Var<T> normalize(Var<T> scores, Variant variant, std::size_t k) {
  switch (variant) {
    case Variant::dense: return softmax_rows(scores);
    case Variant::topk: return softmax_rows(topk_mask(scores, k));
    case Variant::sparsemax: return sparsemax_rows(scores);
    case Variant::entmax15: return entmax15_rows(scores);
  }
  throw ConfigError("unknown variant");
}

}  // namespace ops

template <std::floating_point T>
AttentionResult<T> attend_heads(Var<T> q, Var<T> k, Var<T> v, std::size_t batch,
                                const AttentionConfig& config, Phase phase,
                                bool keep_weights) {
  config.validate();
  const std::size_t d = config.d_model;
  if (q.value().cols() != d || k.value().cols() != d || v.value().cols() != d) {
    throw DimensionError("attend_heads: q/k/v width must equal d_model " + std::to_string(d));
  }
  if (batch == 0 || q.value().rows() % batch || k.value().rows() % batch ||
      k.value().rows() != v.value().rows()) {
    throw DimensionError("attend_heads: rows not divisible into " + std::to_string(batch) +
                         " sequences");
  }
  const std::size_t lq = q.value().rows() / batch;
  const std::size_t lk = k.value().rows() / batch;
  const std::size_t g = config.num_heads;
  const std::size_t dk = config.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  const Variant variant = config.effective_variant(phase);

  AttentionResult<T> result;
  std::vector<Var<T>> sequences;
  sequences.reserve(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    const Var<T> qs = batch == 1 ? q : ops::slice_rows(q, s * lq, lq);
    const Var<T> ks = batch == 1 ? k : ops::slice_rows(k, s * lk, lk);
    const Var<T> vs = batch == 1 ? v : ops::slice_rows(v, s * lk, lk);
    std::vector<Var<T>> heads;
    heads.reserve(g);
    for (std::size_t h = 0; h < g; ++h) {
      const Var<T> qh = g == 1 ? qs : ops::slice_cols(qs, h * dk, dk);
      const Var<T> kh = g == 1 ? ks : ops::slice_cols(ks, h * dk, dk);
      const Var<T> vh = g == 1 ? vs : ops::slice_cols(vs, h * dk, dk);
      Var<T> scores = ops::scale(ops::matmul_nt(qh, kh), scale);
      if (config.causal) scores = ops::structural_mask(scores, true);
      const Var<T> weights = ops::normalize(scores, variant, config.k);
      if (keep_weights) result.weights.push_back(weights.value());
      heads.push_back(ops::matmul(weights, vh));
    }
    sequences.push_back(g == 1 ? heads.front() : ops::concat_cols(heads));
  }
  result.output = batch == 1 ? sequences.front() : ops::concat_rows(sequences);
  return result;
}

template <std::floating_point T>
AttentionResult<T> multi_head_attention(Var<T> x_q, Var<T> x_kv,
                                        const AttentionParams<T>& params,
                                        const AttentionConfig& config, Phase phase,
                                        std::size_t batch, bool keep_weights) {
  config.validate();
  const std::size_t d = config.d_model;
  for (const Var<T>* w : {&params.w_q, &params.w_k, &params.w_v, &params.w_c}) {
    if (w->value().rows() != d || w->value().cols() != d) {
      throw DimensionError("multi_head_attention: projection must be " +
                           std::to_string(d) + "x" + std::to_string(d) + ", got " +
                           shape_string(w->value().shape()));
    }
  }
  if (x_q.value().cols() != d || x_kv.value().cols() != d) {
    throw DimensionError("multi_head_attention: input width must equal d_model");
  }
  const Var<T> q = ops::matmul(x_q, params.w_q);
  const Var<T> k = ops::matmul(x_kv, params.w_k);
  const Var<T> v = ops::matmul(x_kv, params.w_v);
  AttentionResult<T> heads = attend_heads(q, k, v, batch, config, phase, keep_weights);
  heads.output = ops::matmul(heads.output, params.w_c);
  return heads;
}

#define SPARSELAB_INSTANTIATE(T)                                                        \
  template Tensor<T> attention_scores(const Tensor<T>&, const Tensor<T>&);              \
  template ThresholdVector<T> row_thresholds(const Tensor<T>&, std::size_t);            \
  template Tensor<T> topk_mask(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> topk_backward(const Tensor<T>&, const Tensor<T>&, std::size_t);     \
  template Tensor<T> apply_structural_mask(const Tensor<T>&, bool, const KeyMask*);     \
  template Tensor<T> sparsemax_rows(const Tensor<T>&);                                  \
  template Tensor<T> sparsemax_rows_backward(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> entmax15_rows(const Tensor<T>&);                                   \
  template Tensor<T> entmax15_rows_backward(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> normalize_rows(const Tensor<T>&, Variant, std::size_t);            \
  template AttentionOutput<T> sparse_attention(const Tensor<T>&, const Tensor<T>&,      \
                                               const Tensor<T>&, std::size_t);          \
  template AttentionOutput<T> single_head_attention(                                    \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Variant, std::size_t, bool); \
  template Var<T> ops::topk_mask(Var<T>, std::size_t);                                  \
  template Var<T> ops::structural_mask(Var<T>, bool, const KeyMask*);                   \
  template Var<T> ops::sparsemax_rows(Var<T>);                                          \
  template Var<T> ops::entmax15_rows(Var<T>);                                           \
  template Var<T> ops::normalize(Var<T>, Variant, std::size_t);                         \
  template AttentionResult<T> attend_heads(Var<T>, Var<T>, Var<T>, std::size_t,         \
                                           const AttentionConfig&, Phase, bool);        \
  template AttentionResult<T> multi_head_attention(Var<T>, Var<T>,                      \
                                                   const AttentionParams<T>&,           \
                                                   const AttentionConfig&, Phase,       \
                                                   std::size_t, bool);

SPARSELAB_INSTANTIATE(float)
SPARSELAB_INSTANTIATE(double)

#undef SPARSELAB_INSTANTIATE

}  // namespace sparselab
