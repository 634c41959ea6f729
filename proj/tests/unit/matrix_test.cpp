// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "weaverec/error.hpp"
#include "weaverec/matrix.hpp"
#include "weaverec/rng.hpp"
#include "weaverec/numeric.hpp"

namespace weaverec {
namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  RngStream rng(seed);
  return gaussian_init(r, c, 1.0, rng);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix m{{1.5, -2.0}, {0.25, 7.0}};
  EXPECT_EQ(matmul(Matrix::identity(2), m), m);
}

TEST(Matmul, HandComputedProduct) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{0}, {1}};
  EXPECT_EQ(matmul(a, b), (Matrix{{2}, {4}}));
}

TEST(Matmul, ZerosAnnihilate) {
  EXPECT_EQ(matmul(Matrix::zeros(3, 4), Matrix::ones(4, 2)), Matrix::zeros(3, 2));
}

TEST(Matmul, RejectsMismatchedInnerDimension) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST(Matmul, RejectsNonFiniteResult) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(matmul(Matrix{{inf}}, Matrix{{0.0}}), NumericError);
}

TEST(Matmul, AssociativeOnRandomShapes) {
  const auto a = random_matrix(3, 4, 1);
  const auto b = random_matrix(4, 5, 2);
  const auto c = random_matrix(5, 2, 3);
  EXPECT_LT(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-12);
}

TEST(Matmul, TransposeReversesProduct) {
  const auto a = random_matrix(3, 4, 4);
  const auto b = random_matrix(4, 2, 5);
  EXPECT_LT(max_abs_diff(transpose(matmul(a, b)), matmul(transpose(b), transpose(a))), 1e-12);
}

TEST(Axpy, ZeroAlphaKeepsY) {
  const Matrix x{{1, 2}};
  const Matrix y{{3, 4}};
  EXPECT_EQ(axpy_scale(0.0, x, y), y);
}

TEST(Axpy, UnitAlphaOnZeroYGivesX) {
  const Matrix x{{1, -2}, {3, 0.5}};
  EXPECT_EQ(axpy_scale(1.0, x, Matrix::zeros(2, 2)), x);
}

TEST(Axpy, ScalarArithmetic) {
  EXPECT_EQ(axpy_scale(0.5, Matrix{{2}}, Matrix{{1}}), Matrix{{2}});
}

TEST(Axpy, ShapeMismatchThrows) {
  EXPECT_THROW(axpy_scale(1.0, Matrix(1, 2), Matrix(2, 1)), ShapeError);
}

TEST(Axpy, InPlaceMatchesOutOfPlace) {
  const auto x = random_matrix(3, 3, 6);
  auto y = random_matrix(3, 3, 7);
  const auto expected = axpy_scale(-0.3, x, y);
  axpy_inplace(-0.3, x, y);
  EXPECT_TRUE(bit_equal(expected, y));
}

TEST(Matvec, AgreesWithMatmul) {
  const auto m = random_matrix(4, 3, 8);
  const Vector x{0.5, -1.0, 2.0};
  const auto col = matmul(m, Matrix::from_data(3, 1, x));
  const auto y = matvec(m, x);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(y[i], col(i, 0), 1e-14);
  }
  const auto yt = matvec_transposed(transpose(m), x);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(yt[i], y[i], 1e-14);
  }
}

TEST(AddOuter, AccumulatesRankOneUpdate) {
  Matrix m(2, 2);
  add_outer(m, 2.0, Vector{1, 2}, Vector{3, 4});
  EXPECT_EQ(m, (Matrix{{6, 8}, {12, 16}}));
}

TEST(BitEqual, DistinguishesSignedZero) {
  const Matrix pos{{0.0}};
  const Matrix neg{{-0.0}};
  EXPECT_EQ(pos, neg);
  EXPECT_FALSE(bit_equal(pos, neg));
}

TEST(FrobeniusNorm, PythagoreanTriple) {
  EXPECT_DOUBLE_EQ(frobenius_norm(Matrix{{3, 4}}), 5.0);
}

}  // namespace
}  // namespace weaverec
