// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace reno::nn {

/// Dense row-major N x C activations; row i belongs to coordinate i of the
/// geometry the matrix is paired with.
template <typename T>
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
  {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T* row(std::size_t i) noexcept { return data_.data() + i * cols_; }
  const T* row(std::size_t i) const noexcept { return data_.data() + i * cols_; }

  T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  T operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const
  {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// A named learnable tensor with its gradient accumulator.
template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> values;
  std::vector<T> grad;

  ParamTensor() = default;
  ParamTensor(std::string n, std::vector<std::size_t> s)
    : name(std::move(n)), shape(std::move(s))
  {
    const std::size_t count = numel();
    values.assign(count, T(0));
    grad.assign(count, T(0));
  }

  std::size_t numel() const
  {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  std::span<const T> view() const { return values; }
};

}  // namespace reno::nn
