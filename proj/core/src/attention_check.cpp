// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparselab/attention_check.hpp"

#include <algorithm>
#include <cmath>

#include "sparselab/ops.hpp"

namespace sparselab {

double AttentionCheckOutcome::max_rel_error() const {
  return std::max({q.max_rel_error, k.max_rel_error, v.max_rel_error});
}

namespace {

// Number of rows whose k-th largest score is shared with a dropped entry.
std::size_t tied_threshold_rows(const Tensor<double>& scores, std::size_t k) {
  const auto t = row_thresholds(scores, k);
  std::size_t tied = 0;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto row = scores.row(i);
    const auto kept = std::count_if(row.begin(), row.end(), [&](double s) { return s >= t[i]; });
    if (static_cast<std::size_t>(kept) > std::min(k, scores.cols())) ++tied;
  }
  return tied;
}

}  // namespace

AttentionCheckOutcome check_attention_gradients(const AttentionCheckSpec& spec, Rng& rng) {
  AttentionConfig config;
  config.variant = spec.variant;
  config.k = spec.k;
  config.num_heads = 1;
  config.d_model = spec.d;
  config.validate();

  const Tensor<double> q = random_uniform<double>({spec.l_q, spec.d}, -1, 1, rng);
  Tensor<double> k = random_uniform<double>({spec.l_k, spec.d}, -1, 1, rng);
  const Tensor<double> v = random_uniform<double>({spec.l_k, spec.d}, -1, 1, rng);
  const Tensor<double> r = random_uniform<double>({spec.l_q, spec.d}, -1, 1, rng);
  if (spec.force_ties) {
    for (std::size_t j = 1; j < spec.l_k; ++j) std::ranges::copy(k.row(0), k.row(j).begin());
  }

  AttentionCheckOutcome out;
  if (spec.variant == Variant::topk) {
    const std::size_t tied = tied_threshold_rows(attention_scores(q, k), spec.k);
    if (tied > 0) {
      out.skipped = true;
      out.reason = std::to_string(tied) + " row(s) tied at the top-k threshold";
      return out;
    }
  }

  auto loss = [&](Graph<double>& g, Var<double> qv, Var<double> kv, Var<double> vv) {
    const Var<double> o = attend_heads(qv, kv, vv, 1, config, Phase::train).output;
    return ops::sum(ops::multiply(o, g.constant(r)));
  };
  auto support = [&](const Tensor<double>& qq, const Tensor<double>& kk) {
    const Tensor<double> w = normalize_rows(attention_scores(qq, kk), spec.variant, spec.k);
    std::vector<std::uint8_t> s(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) s[i] = w[i] > 0 ? 1 : 0;
    return s;
  };

  out.q = grad_check_guarded<double>(
      [&](Graph<double>& g, Var<double> x) { return loss(g, x, g.constant(k), g.constant(v)); },
      q, spec.eps, [&](const Tensor<double>& x) { return support(x, k); });
  out.k = grad_check_guarded<double>(
      [&](Graph<double>& g, Var<double> x) { return loss(g, g.constant(q), x, g.constant(v)); },
      k, spec.eps, [&](const Tensor<double>& x) { return support(q, x); });
  out.v = grad_check_guarded<double>(
      [&](Graph<double>& g, Var<double> x) { return loss(g, g.constant(q), g.constant(k), x); },
      v, spec.eps, nullptr);
  return out;
}

AttentionCheckSummary check_attention_gradients(const AttentionCheckSpec& spec,
                                                std::size_t instances, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "gradcheck");
  AttentionCheckSummary s;
  s.variant = spec.variant;
  s.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    const AttentionCheckOutcome o = check_attention_gradients(spec, rng);
    if (o.skipped) {
      ++s.skipped_instances;
      s.skip_reasons.push_back("instance " + std::to_string(i) + ": " + o.reason);
      continue;
    }
    for (const GradCheckResult* r : {&o.q, &o.k, &o.v}) {
      s.checked_coords += r->checked;
      s.skipped_coords += r->skipped;
    }
    s.max_rel_error = std::max(s.max_rel_error, o.max_rel_error());
  }
  return s;
}

}  // namespace sparselab
