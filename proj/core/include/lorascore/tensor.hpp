// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lorascore/error.hpp"

namespace lorascore::nd {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

// Dense row-major array. A default-constructed tensor is the empty tensor
// (rank 0, no elements); every constructed tensor has positive extents.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_product(shape_), T{0});
  }

  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (shape_product(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static BasicTensor filled(Shape shape, T value) {
    BasicTensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  // Build a [rows x cols] matrix from nested initializer rows.
  static BasicTensor matrix(std::initializer_list<std::initializer_list<T>> rows_init) {
    const std::size_t r = rows_init.size();
    const std::size_t c = r == 0 ? 0 : rows_init.begin()->size();
    std::vector<T> values;
    values.reserve(r * c);
    for (const auto& row : rows_init) {
      if (row.size() != c) throw DimensionError("ragged matrix initializer");
      values.insert(values.end(), row.begin(), row.end());
    }
    return BasicTensor({r, c}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return rank() >= 2 ? shape_.at(1) : 1; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<T> row(std::size_t r) {
    const std::size_t c = cols();
    return std::span<T>(data_).subspan(r * c, c);
  }
  std::span<const T> row(std::size_t r) const {
    const std::size_t c = cols();
    return std::span<const T>(data_).subspan(r * c, c);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (const std::size_t extent : shape_) {
      if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// A value with its gradient accumulator. Frozen parameters keep a zero grad.
struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(Tensor v, bool is_trainable)
      : value(std::move(v)), grad(value.shape()), trainable(is_trainable) {}

  void zero_grad() { grad.fill(0.0F); }

  // Accumulate into grad; frozen parameters ignore the contribution.
  void accumulate(std::span<const float> g) {
    if (!trainable) return;
    if (g.size() != grad.size()) throw DimensionError("gradient length mismatch");
    auto dst = grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
};

}  // namespace lorascore::nd
