// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include "sparselab/graph.hpp"

// Differentiable operations recorded on a Graph. Each wraps a dense kernel
// and registers the matching vector-Jacobian product.
namespace sparselab::ops {

template <std::floating_point T>
Var<T> matmul(Var<T> a, Var<T> b);

/// a * b^T
template <std::floating_point T>
Var<T> matmul_nt(Var<T> a, Var<T> b);

template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b);

template <std::floating_point T>
Var<T> subtract(Var<T> a, Var<T> b);

/// Elementwise product.
template <std::floating_point T>
Var<T> multiply(Var<T> a, Var<T> b);

template <std::floating_point T>
Var<T> scale(Var<T> a, std::type_identity_t<T> factor);

/// x[m x n] + bias[n] added to every row.
template <std::floating_point T>
Var<T> add_bias(Var<T> x, Var<T> bias);

template <std::floating_point T>
Var<T> relu(Var<T> x);

template <std::floating_point T>
Var<T> softmax_rows(Var<T> x);

/// Per-row normalization to zero mean and unit variance, then gain and offset
/// (both of length n).
template <std::floating_point T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> offset,
                  std::type_identity_t<T> eps = T(1e-5));

template <std::floating_point T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count);

template <std::floating_point T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count);

template <std::floating_point T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);

template <std::floating_point T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);

/// Row lookup (embedding): out[i] = table[ids[i]].
template <std::floating_point T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids);

/// Scalar sum of all entries.
template <std::floating_point T>
Var<T> sum(Var<T> x);

/// Mean over rows of -log softmax(logits)[target]. Rows whose target is
/// negative are ignored.
template <std::floating_point T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets);

}  // namespace sparselab::ops
