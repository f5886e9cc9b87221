// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "sparselab/graph.hpp"

namespace sparselab {

/// Builds a scalar from a differentiable input on a fresh graph.
template <std::floating_point T>
using ScalarFn = std::function<Var<T>(Graph<T>&, Var<T>)>;

/// Discrete structure of the computation at a point (top-k mask, sparsemax
/// support, ...). Coordinates whose perturbation changes it are skipped.
template <std::floating_point T>
using PatternFn = std::function<std::vector<std::uint8_t>(const Tensor<T>&)>;

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Compares reverse-mode gradients of f at x with central differences.
/// Per coordinate error is |a - c| / max(|a|, |c|, s) where s is the largest
/// analytic magnitude in the tensor (at least 1e-12). The floor keeps the
/// O(eps^2) truncation error of the difference quotient from dominating
/// near-zero components.
template <std::floating_point T>
GradCheckResult grad_check_guarded(const ScalarFn<T>& f, const Tensor<T>& x,
                                   double eps, const PatternFn<T>& pattern) {
  Tensor<T> analytic;
  {
    Graph<T> g;
    const Var<T> in = g.leaf(x);
    const Var<T> out = f(g, in);
    analytic = g.backward(out)[in];
  }
  double scale = 1e-12;
  for (T a : analytic.values()) scale = std::max(scale, std::abs(static_cast<double>(a)));
  auto evaluate = [&f](const Tensor<T>& at) {
    Graph<T> g;
    return static_cast<double>(f(g, g.leaf(at)).value()[0]);
  };
  const std::vector<std::uint8_t> base = pattern ? pattern(x) : std::vector<std::uint8_t>{};

  GradCheckResult result;
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = probe[i];
    probe[i] = static_cast<T>(orig + eps);
    const bool plus_ok = !pattern || pattern(probe) == base;
    const double f_plus = evaluate(probe);
    probe[i] = static_cast<T>(orig - eps);
    const bool minus_ok = !pattern || pattern(probe) == base;
    const double f_minus = evaluate(probe);
    probe[i] = orig;
    if (!plus_ok || !minus_ok) {
      ++result.skipped;
      continue;
    }
    const double central = (f_plus - f_minus) / (2 * eps);
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(central), scale});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(a - central) / denom);
    ++result.checked;
  }
  return result;
}

/// Maximum relative error between analytic and central-difference gradients.
template <std::floating_point T>
double grad_check(const ScalarFn<T>& f, const Tensor<T>& x, double eps) {
  return grad_check_guarded<T>(f, x, eps, nullptr).max_rel_error;
}

}  // namespace sparselab
