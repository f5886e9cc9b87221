// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparselab/errors.hpp"

namespace sparselab {

using Shape = std::vector<std::size_t>;

enum class DType { f32, f64 };

template <std::floating_point T>
constexpr DType dtype_of() {
  static_assert(std::same_as<T, float> || std::same_as<T, double>,
                "only f32 and f64 tensors are supported");
  return std::same_as<T, float> ? DType::f32 : DType::f64;
}

constexpr std::string_view dtype_name(DType d) {
  return d == DType::f32 ? "f32" : "f64";
}

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

template <class T>
constexpr T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

/// Dense row-major array of rank 1 to 3.
///
/// Matrix-style accessors treat the last extent as columns and fold every
/// leading extent into rows, so a [batch, len, width] tensor reads as a
/// (batch*len) x width matrix. Values are either finite or -inf; -inf is
/// reserved for masked attention scores.
template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<T> data;
    data.reserve(m * n);
    for (const auto& r : rows) {
      if (r.size() != n) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({m, n}, std::move(data));
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return shape_.empty(); }

  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t rows() const noexcept {
    if (shape_.empty()) return 0;
    return data_.size() / shape_.back();
  }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols() + j];
  }
  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols(), cols()}; }
  std::span<const T> row(std::size_t i) const {
    return {data_.data() + i * cols(), cols()};
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  bool same_shape(const Tensor& other) const noexcept {
    return shape_ == other.shape_;
  }

  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  /// True when every entry is finite or -inf (the only permitted non-finite value).
  bool well_formed() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) {
      return std::isfinite(v) || v == neg_inf<T>();
    });
  }

  template <std::floating_point U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  /// Exact comparison: same shape and equal values (-inf == -inf).
  bool operator==(const Tensor& other) const = default;

 private:
  static std::size_t checked_size(const Shape& s) {
    if (s.empty() || s.size() > 3) {
      throw DimensionError("tensor rank must be 1..3, got shape " + shape_string(s));
    }
    for (std::size_t e : s) {
      if (e == 0) throw DimensionError("zero extent in shape " + shape_string(s));
    }
    return shape_product(s);
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace sparselab
