// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace weaverec {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Every free function below returns finite data or throws NumericError, and
/// throws ShapeError on nonconforming operands.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
  static Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }
  static Matrix identity(std::size_t n);
  static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  /// Value equality (-0.0 == 0.0). Use bit_equal for byte identity.
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// alpha * x + y for same-shape operands.
Matrix axpy_scale(double alpha, const Matrix& x, const Matrix& y);

/// In-place y += alpha * x.
void axpy_inplace(double alpha, const Matrix& x, Matrix& y);

Matrix transpose(const Matrix& m);
Matrix scaled(const Matrix& m, double factor);

/// m * x.
Vector matvec(const Matrix& m, std::span<const double> x);
/// m^T * x.
Vector matvec_transposed(const Matrix& m, std::span<const double> x);
/// m += factor * u v^T.
void add_outer(Matrix& m, double factor, std::span<const double> u, std::span<const double> v);

double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Byte-level equality, distinguishes -0.0 from 0.0.
bool bit_equal(const Matrix& a, const Matrix& b);

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

}  // namespace weaverec
