#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ocl/common.hpp"

namespace ocl {

// Dense row-major matrix of doubles. All repository arithmetic is 64-bit.
struct Matrix {
  int rows = 0;
  int cols = 0;
  VecD data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int r, int c) {
    return data[static_cast<size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }

  const double* row(int r) const {
    return data.data() + static_cast<size_t>(r) * cols;
  }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }

  VecD row_copy(int r) const {
    return VecD(row(r), row(r) + cols);
  }

  VecD col_copy(int c) const {
    VecD out(rows);
    for (int r = 0; r < rows; ++r) out[r] = (*this)(r, c);
    return out;
  }

  size_t size() const { return data.size(); }

  bool finite() const { return all_finite(data); }

  void require_finite(const std::string& what) const {
    if (!finite()) throw InvalidInput(what + ": non-finite entries");
  }
};

inline Matrix identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

}  // namespace ocl
