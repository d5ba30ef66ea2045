#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sstap/error.hpp"

namespace sstap {

// Dense row-major matrix. Feature sequences are stored time-major
// (one row per snippet), boundary-matching maps as D x T.
template <typename R>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, R fill = R{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  R& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const R& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<R> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const R> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  R* data() noexcept { return data_.data(); }
  const R* data() const noexcept { return data_.data(); }
  std::vector<R>& values() noexcept { return data_; }
  const std::vector<R>& values() const noexcept { return data_; }

  void fill(R v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  bool same_shape(const Matrix<U>& o) const noexcept {
    return rows_ == o.rows() && cols_ == o.cols();
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<R> data_;
};

template <typename To, typename From>
Matrix<To> matrix_cast(const Matrix<From>& m) {
  Matrix<To> out(m.rows(), m.cols());
  std::transform(m.values().begin(), m.values().end(), out.values().begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

// N-dimensional parameter tensor with flat storage.
template <typename R>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, R fill = R{0})
      : shape_(std::move(shape)),
        data_(std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                              std::multiplies<>()),
              fill) {}

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  R& operator[](std::size_t i) noexcept { return data_[i]; }
  const R& operator[](std::size_t i) const noexcept { return data_[i]; }
  R* data() noexcept { return data_.data(); }
  const R* data() const noexcept { return data_.data(); }
  std::span<R> span() noexcept { return data_; }
  std::span<const R> span() const noexcept { return data_; }

  void fill(R v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<R> data_;
};

}  // namespace sstap
