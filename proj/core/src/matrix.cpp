// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/matrix.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "weaverec/error.hpp"

namespace weaverec {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream out;
  out << m.rows() << "x" << m.cols();
  return out.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw ShapeError("Matrix: ragged initializer list");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
  }
  return m;
}

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
  if (data.size() != rows * cols) {
    throw ShapeError("Matrix::from_data: expected " + std::to_string(rows * cols) +
                     " values, got " + std::to_string(data.size()));
  }
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_ = std::move(data);
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a) + " x " + shape_str(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) {
        continue;
      }
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out_row[j] += aik * b_row[j];
      }
    }
  }
  require_finite(out, "matmul");
  return out;
}

Matrix axpy_scale(double alpha, const Matrix& x, const Matrix& y) {
  require_same_shape(x, y, "axpy_scale");
  Matrix out = y;
  auto dst = out.data();
  const auto src = x.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = alpha * src[i] + dst[i];
  }
  require_finite(out, "axpy_scale");
  return out;
}

void axpy_inplace(double alpha, const Matrix& x, Matrix& y) {
  require_same_shape(x, y, "axpy_inplace");
  auto dst = y.data();
  const auto src = x.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += alpha * src[i];
  }
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out(j, i) = m(i, j);
    }
  }
  return out;
}

Matrix scaled(const Matrix& m, double factor) {
  Matrix out = m;
  for (double& v : out.data()) {
    v *= factor;
  }
  require_finite(out, "scaled");
  return out;
}

Vector matvec(const Matrix& m, std::span<const double> x) {
  if (m.cols() != x.size()) {
    throw ShapeError("matvec: " + shape_str(m) + " times vector of length " +
                     std::to_string(x.size()));
  }
  Vector out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) {
      acc += r[j] * x[j];
    }
    out[i] = acc;
  }
  return out;
}

Vector matvec_transposed(const Matrix& m, std::span<const double> x) {
  if (m.rows() != x.size()) {
    throw ShapeError("matvec_transposed: " + shape_str(m) + "^T times vector of length " +
                     std::to_string(x.size()));
  }
  Vector out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) {
      continue;
    }
    const auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      out[j] += r[j] * xi;
    }
  }
  return out;
}

void add_outer(Matrix& m, double factor, std::span<const double> u, std::span<const double> v) {
  if (m.rows() != u.size() || m.cols() != v.size()) {
    throw ShapeError("add_outer: " + shape_str(m) + " vs outer " + std::to_string(u.size()) +
                     "x" + std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double ui = factor * u[i];
    if (ui == 0.0) {
      continue;
    }
    auto r = m.row(i);
    for (std::size_t j = 0; j < v.size(); ++j) {
      r[j] += ui * v[j];
    }
  }
}

double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data()) {
    acc += v * v;
  }
  return std::sqrt(acc);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.same_shape(b) &&
         (a.empty() || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
}

void require_finite(const Matrix& m, const char* what) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite entry");
    }
  }
}

}  // namespace weaverec
