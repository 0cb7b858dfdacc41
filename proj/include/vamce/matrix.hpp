// vamce/matrix.hpp
//
// Copyright 2026 The vamce authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "vamce/common.hpp"

namespace vamce {

/// Dense real matrix, row-major, 64-bit entries. Entries are expected to stay
/// finite; operations that can break that (element-wise divide/power) guard
/// their domain and throw instead of producing inf/nan.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError(detail::str("matrix data length ", data_.size(),
                                   " does not match ", rows_, "x", cols_));
    }
  }

  // Row-of-rows construction, mainly for tests and small literals.
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) {
        throw ShapeError("ragged initializer for Matrix");
      }
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class ElementwiseOp { kAdd, kSubtract, kMultiply, kDivide, kPower };

namespace detail {

inline double apply_op(ElementwiseOp op, double a, double b) {
  switch (op) {
    case ElementwiseOp::kAdd:
      return a + b;
    case ElementwiseOp::kSubtract:
      return a - b;
    case ElementwiseOp::kMultiply:
      return a * b;
    case ElementwiseOp::kDivide:
      return a / b;
    case ElementwiseOp::kPower:
      return std::pow(a, b);
  }
  throw DomainError("unknown elementwise op");
}

}  // namespace detail

/// C[i,j] = op(A[i,j], B[i,j]). B may also be 1x1, in which case its single
/// entry is broadcast. Division requires every denominator entry > 0.
inline Matrix elementwise(ElementwiseOp op, const Matrix& a, const Matrix& b) {
  const bool broadcast = b.rows() == 1 && b.cols() == 1;
  if (!broadcast && !a.same_shape(b)) {
    throw ShapeError(detail::str("elementwise shape mismatch: ", a.rows(), "x",
                                 a.cols(), " vs ", b.rows(), "x", b.cols()));
  }
  if (op == ElementwiseOp::kDivide) {
    for (double v : b.data()) {
      if (!(v > 0.0)) {
        throw DomainError(
            detail::str("elementwise divide by non-positive entry ", v));
      }
    }
  }
  Matrix c(a.rows(), a.cols());
  const std::size_t n = a.size();
  if (broadcast) {
    const double s = b(0, 0);
    for (std::size_t i = 0; i < n; ++i)
      c.data()[i] = detail::apply_op(op, a.data()[i], s);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      c.data()[i] = detail::apply_op(op, a.data()[i], b.data()[i]);
  }
  if (op == ElementwiseOp::kPower) {
    for (double v : c.data()) {
      if (!std::isfinite(v)) {
        throw DomainError("elementwise power produced a non-finite value");
      }
    }
  }
  return c;
}

inline Matrix elementwise(ElementwiseOp op, const Matrix& a, double scalar) {
  return elementwise(op, a, Matrix(1, 1, scalar));
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  return elementwise(ElementwiseOp::kAdd, a, b);
}
inline Matrix subtract(const Matrix& a, const Matrix& b) {
  return elementwise(ElementwiseOp::kSubtract, a, b);
}
inline Matrix multiply(const Matrix& a, const Matrix& b) {
  return elementwise(ElementwiseOp::kMultiply, a, b);
}
inline Matrix divide(const Matrix& a, const Matrix& b) {
  return elementwise(ElementwiseOp::kDivide, a, b);
}
inline Matrix epow(const Matrix& a, double exponent) {
  return elementwise(ElementwiseOp::kPower, a, exponent);
}

/// Standard product, A (m x k) times B (k x n).
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError(detail::str("matmul shape mismatch: ", a.rows(), "x",
                                 a.cols(), " times ", b.rows(), "x", b.cols()));
  }
  Matrix c(a.rows(), b.cols(), 0.0);
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

/// A times B^T without forming the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError(detail::str("matmul_nt shape mismatch: ", a.rows(), "x",
                                 a.cols(), " times (", b.rows(), "x", b.cols(),
                                 ")^T"));
  }
  Matrix c(a.rows(), b.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      crow[j] = acc;
    }
  }
  return c;
}

/// A^T times B without forming the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError(detail::str("matmul_tn shape mismatch: (", a.rows(), "x",
                                 a.cols(), ")^T times ", b.rows(), "x",
                                 b.cols()));
  }
  Matrix c(a.cols(), b.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

inline double mean(const Matrix& a) {
  if (a.empty()) throw DomainError("mean of empty matrix");
  return sum(a) / static_cast<double>(a.size());
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const Matrix& a) {
  for (double v : a.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

/// Clamps every entry from below; used to keep variances and NMF factors off
/// zero.
inline void floor_in_place(Matrix& a, double floor_value) {
  for (double& v : a.data()) {
    if (v < floor_value) v = floor_value;
  }
}

}  // namespace vamce
