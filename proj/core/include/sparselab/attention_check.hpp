// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sparselab/attention.hpp"
#include "sparselab/grad_check.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

/// Random single-head attention instances for gradient checking.
struct AttentionCheckSpec {
  Variant variant = Variant::topk;
  std::size_t l_q = 4;
  std::size_t l_k = 6;
  std::size_t d = 4;
  std::size_t k = 2;
  double eps = 1e-5;
  /// Make every key identical so each score row is one big tie.
  bool force_ties = false;
};

struct AttentionCheckOutcome {
  bool skipped = false;
  std::string reason;  ///< set when skipped
  GradCheckResult q, k, v;

  double max_rel_error() const;
};

/// Loss sum(R * attend(q, k, v)) in f64 through the same attention path the
/// model uses, with q, k, v, R uniform in [-1, 1] drawn from `rng`. Each of
/// q, k, v is checked against central differences under the weight-support
/// guard. A top-k instance whose threshold is tied is skipped with a reason,
/// since the mask is not locally constant there.
AttentionCheckOutcome check_attention_gradients(const AttentionCheckSpec& spec, Rng& rng);

struct AttentionCheckSummary {
  Variant variant = Variant::dense;
  std::size_t instances = 0;
  std::size_t skipped_instances = 0;
  std::size_t checked_coords = 0;
  std::size_t skipped_coords = 0;
  double max_rel_error = 0;
  std::vector<std::string> skip_reasons;

  bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

/// Runs `instances` checks drawn from the "gradcheck" substream of `seed`.
AttentionCheckSummary check_attention_gradients(const AttentionCheckSpec& spec,
                                                std::size_t instances, std::uint64_t seed);

}  // namespace sparselab
