// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparselab/numerics.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace sparselab {

namespace {

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

// c[m x n] += a[m x p] * b[p x n]; the k loop sits outside j so the inner
// loop vectorizes while each c(i, j) still sums over k in ascending order.
// Zero entries of a contribute nothing for finite b and are skipped, which
// is what makes products with sparse attention weights cheaper.
template <class T>
void gemm_ikj(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m,
              std::size_t p, std::size_t n) {
  // Nonzero columns of each row of `a` are gathered without branching, so
  // sparse attention weights skip work without mispredicted branches.
  std::vector<std::size_t> nz(p);
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * p;
    std::size_t count = 0;
    for (std::size_t k = 0; k < p; ++k) {
      nz[count] = k;
      count += ai[k] != T(0);
    }
    for (std::size_t q = 0; q < count; ++q) {
      const T aik = ai[nz[q]];
      const T* bk = b + nz[q] * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

}  // namespace

template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows() || b.rank() != 2) {
    throw DimensionError("matmul: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor<T> c({a.rows(), b.cols()});
  gemm_ikj(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

template <std::floating_point T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  const Tensor<T> bt = transpose(b);
  Tensor<T> c({a.rows(), b.rows()});
  gemm_ikj(a.data(), bt.data(), c.data(), a.rows(), a.cols(), b.rows());
  return c;
}

template <std::floating_point T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  }
  const std::size_t p = a.rows(), m = a.cols(), n = b.cols();
  Tensor<T> c({m, n});
  T* cd = c.data();
  for (std::size_t k = 0; k < p; ++k) {
    const T* ak = a.data() + k * m;
    const T* __restrict bk = b.data() + k * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T aki = ak[i];
      if (aki == T(0)) continue;
      T* __restrict ci = cd + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
  return t;
}

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

template <std::floating_point T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "subtract");
  Tensor<T> c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

template <std::floating_point T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "hadamard");
  Tensor<T> c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

template <std::floating_point T>
Tensor<T> scaled(const Tensor<T>& a, T factor) {
  Tensor<T> c = a;
  for (T& v : c.values()) v *= factor;
  return c;
}

template <std::floating_point T>
void accumulate(Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "accumulate");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <std::floating_point T>
T sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  return s;
}

template <std::floating_point T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    auto out = y.row(i);
    T hi = neg_inf<T>();
    for (T v : in) {
      if (v != neg_inf<T>() && v > hi) hi = v;
    }
    if (hi == neg_inf<T>()) {
      throw DegenerateRowError("softmax_rows: row " + std::to_string(i) +
                               " has no finite entry");
    }
    T total = 0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      // exp(-inf) is exactly zero, so masked entries need no branch.
      out[j] = std::exp(in[j] - hi);
      total += out[j];
    }
    for (T& v : out) v /= total;
  }
  return y;
}

template <std::floating_point T>
Tensor<T> softmax_rows_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  require_same_shape(y, dy, "softmax_rows_backward");
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto yr = y.row(i);
    const auto gr = dy.row(i);
    T dot = 0;
    for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
    auto out = dx.row(i);
    for (std::size_t j = 0; j < yr.size(); ++j) out[j] = yr[j] * (gr[j] - dot);
  }
  return dx;
}

#define SPARSELAB_INSTANTIATE(T)                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> transpose(const Tensor<T>&);                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> subtract(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> scaled(const Tensor<T>&, T);                             \
  template void accumulate(Tensor<T>&, const Tensor<T>&);                     \
  template T sum(const Tensor<T>&);                                           \
  template Tensor<T> softmax_rows(const Tensor<T>&);                          \
  template Tensor<T> softmax_rows_backward(const Tensor<T>&, const Tensor<T>&);

SPARSELAB_INSTANTIATE(float)
SPARSELAB_INSTANTIATE(double)

#undef SPARSELAB_INSTANTIATE

}  // namespace sparselab
