#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace sm4 {

// Dense row-major matrix. Just enough for count tables and parameter blocks.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T value = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Packed upper triangle (diagonal included) of a symmetric K x K table.
// Accesses canonicalize (a, b) to (min, max).
template <typename T>
class UpperTriangular {
 public:
  UpperTriangular() = default;
  explicit UpperTriangular(std::size_t n, T value = T{})
      : n_(n), data_(n * (n + 1) / 2, value) {}

  std::size_t size() const { return n_; }

  T& operator()(std::size_t a, std::size_t b) { return data_[offset(a, b)]; }
  const T& operator()(std::size_t a, std::size_t b) const {
    return data_[offset(a, b)];
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const UpperTriangular&) const = default;

 private:
  std::size_t offset(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    return a * n_ - a * (a - 1) / 2 + (b - a);
  }

  std::size_t n_ = 0;
  std::vector<T> data_;
};

}  // namespace sm4
