#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace randrnn {

/// Row-major dense matrix; rows are samples throughout the library.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), values(r * c, fill) {}

  std::span<T> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const T> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  T& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Encoded features, one sample per row.
using FeatureMatrix = Matrix<float>;

/// Per-sample, per-class SVM decision values. Column order = class index.
using ScoreMatrix = Matrix<double>;

/// Copies the listed rows, in order.
template <typename T>
Matrix<T> take_rows(const Matrix<T>& m, std::span<const std::size_t> idx) {
  Matrix<T> out(idx.size(), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = m.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace randrnn
