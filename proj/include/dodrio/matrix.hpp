#pragma once

#include <cassert>
#include <concepts>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "dodrio/error.hpp"

namespace dodrio {

/// Anything indexable as m(i, j) with a row/column count. Attention
/// algorithms are written against this so they accept both the float views
/// into a loaded tensor and double matrices built in memory.
template <class M>
concept MatrixLike = requires(const M& m, std::size_t i) {
  { m.rows() } -> std::convertible_to<std::size_t>;
  { m.cols() } -> std::convertible_to<std::size_t>;
  { m(i, i) } -> std::convertible_to<double>;
};

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_)
        throw Error(ErrorCode::LengthMismatch, "ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  template <MatrixLike M>
  static Matrix from(const M& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < out.rows_; ++i)
      for (std::size_t j = 0; j < out.cols_; ++j) out(i, j) = m(i, j);
    return out;
  }

  static Matrix identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  const std::vector<double>& values() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Non-owning n x n view into one head of a 32-bit attention tensor.
class HeadView {
 public:
  HeadView(std::span<const float> values, std::size_t n) : values_(values), n_(n) {
    assert(values.size() == n * n);
  }

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < n_ && j < n_);
    return values_[i * n_ + j];
  }
  std::span<const float> row(std::size_t i) const { return values_.subspan(i * n_, n_); }

 private:
  std::span<const float> values_;
  std::size_t n_;
};

template <MatrixLike M>
void require_square(const M& m, const char* what) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::LengthMismatch, std::string(what) + ": matrix is not square");
}

}  // namespace dodrio
