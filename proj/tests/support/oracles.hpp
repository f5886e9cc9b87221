// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

// Reference implementations written from the defining formulas, kept
// independent of the library kernels they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "sparselab/rng.hpp"
#include "sparselab/tensor.hpp"

namespace sparselab::testing {

using Matrix = std::vector<std::vector<double>>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline Matrix to_matrix(const Tensor<double>& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

inline Tensor<double> to_tensor(const Matrix& m) {
  Tensor<double> t({m.size(), m.front().size()});
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) t(i, j) = m[i][j];
  return t;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  return c;
}

inline Matrix naive_transpose(const Matrix& a) {
  Matrix t(a.front().size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
  return t;
}

// e^{x_i} / sum_j e^{x_j} over finite entries, straight from the definition.
inline std::vector<double> direct_softmax(const std::vector<double>& x) {
  double z = 0;
  for (double v : x)
    if (v != kNegInf) z += std::exp(v);
  std::vector<double> p(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != kNegInf) p[i] = std::exp(x[i]) / z;
  return p;
}

// Keeps the k largest finite entries of a row by full sort.
inline std::vector<double> sort_topk_mask(const std::vector<double>& row, std::size_t k) {
  std::vector<double> finite;
  for (double v : row)
    if (v != kNegInf) finite.push_back(v);
  std::sort(finite.begin(), finite.end(), std::greater<>());
  const double t = finite[std::min(k, finite.size()) - 1];
  std::vector<double> out(row.size(), kNegInf);
  for (std::size_t j = 0; j < row.size(); ++j)
    if (row[j] != kNegInf && row[j] >= t) out[j] = row[j];
  return out;
}

// Euclidean projection onto the simplex by enumerating every support S:
// p_S = x_S - (sum x_S - 1)/|S|; feasible when p_S > 0 and entries off S are
// at most the threshold. Returns the closest feasible candidate.
inline std::vector<double> brute_sparsemax(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    double sum = 0;
    std::size_t size = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) {
        sum += x[i];
        ++size;
      }
    const double tau = (sum - 1) / static_cast<double>(size);
    std::vector<double> p(n, 0.0);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        p[i] = x[i] - tau;
        if (p[i] < 0) ok = false;
      }
    }
    if (!ok) continue;
    double dist = 0;
    for (std::size_t i = 0; i < n; ++i) dist += (p[i] - x[i]) * (p[i] - x[i]);
    if (dist < best_dist) {
      best_dist = dist;
      best = p;
    }
  }
  return best;
}

// 1.5-entmax by bisection on tau: sum_i max(0, x_i/2 - tau)^2 = 1.
inline std::vector<double> bisect_entmax15(const std::vector<double>& x, int iterations = 200) {
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] / 2;
  const double zmax = *std::max_element(z.begin(), z.end());
  double lo = zmax - 1, hi = zmax;
  auto mass = [&](double tau) {
    double s = 0;
    for (double v : z) s += std::pow(std::max(0.0, v - tau), 2);
    return s;
  };
  for (int it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) >= 1 ? lo : hi) = mid;
  }
  const double tau = 0.5 * (lo + hi);
  std::vector<double> p(z.size());
  double total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::pow(std::max(0.0, z[i] - tau), 2);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

// softmax(topk(Q K^T / sqrt(d), k)) V built one equation at a time.
inline Matrix naive_topk_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   std::size_t top_k, bool causal = false) {
  Matrix p = naive_matmul(q, naive_transpose(k));
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.front().size()));
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      p[i][j] *= scale;
      if (causal && j > i) p[i][j] = kNegInf;
    }
  Matrix a(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) a[i] = direct_softmax(sort_topk_mask(p[i], top_k));
  return naive_matmul(a, v);
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  return random_uniform<double>(std::move(shape), lo, hi, rng);
}

// Central-difference Jacobian of f: R^n -> R^m at x.
inline Matrix numeric_jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                               std::vector<double> x, double eps) {
  const std::size_t n = x.size();
  Matrix jac;
  for (std::size_t c = 0; c < n; ++c) {
    const double orig = x[c];
    x[c] = orig + eps;
    const auto plus = f(x);
    x[c] = orig - eps;
    const auto minus = f(x);
    x[c] = orig;
    if (jac.empty()) jac.assign(plus.size(), std::vector<double>(n));
    for (std::size_t r = 0; r < plus.size(); ++r) jac[r][c] = (plus[r] - minus[r]) / (2 * eps);
  }
  return jac;
}

}  // namespace sparselab::testing
