// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sparselab/tensor.hpp"

namespace sparselab {

// Dense kernels on matrices (rank-2 views, see Tensor). Every reduction runs
// in a fixed left-to-right order so results are bit-reproducible; in
// particular each matmul output element is accumulated over the inner index
// in ascending order starting from zero, which is exactly what a naive
// triple loop computes.

/// a[m x p] * b[p x n]. Throws DimensionError on inner-extent mismatch.
template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// a[m x p] * b[n x p]^T.
template <std::floating_point T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

/// a[p x m]^T * b[p x n].
template <std::floating_point T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& a);

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
Tensor<T> scaled(const Tensor<T>& a, T factor);

/// In-place a += b (same shape).
template <std::floating_point T>
void accumulate(Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
T sum(const Tensor<T>& a);

/// Row-wise softmax. -inf entries map to exactly 0; the row maximum is taken
/// over finite entries only. A row without finite entries throws
/// DegenerateRowError.
template <std::floating_point T>
Tensor<T> softmax_rows(const Tensor<T>& x);

/// Vector-Jacobian product of softmax_rows given its output y:
/// dx = y * (dy - <y, dy>) per row.
template <std::floating_point T>
Tensor<T> softmax_rows_backward(const Tensor<T>& y, const Tensor<T>& dy);

}  // namespace sparselab
