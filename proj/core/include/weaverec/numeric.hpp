// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "weaverec/matrix.hpp"
#include "weaverec/rng.hpp"

namespace weaverec {

/// Matrix with i.i.d. N(0, sigma^2) entries drawn row-major from `rng`.
Matrix gaussian_init(std::size_t rows, std::size_t cols, double sigma, RngStream& rng);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient (f(t + eps e_i) - f(t - eps e_i)) / (2 eps).
/// Throws NumericError if f returns a non-finite value.
Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> theta, double eps);

/// Numerically stable softmax.
Vector softmax(std::span<const double> logits);
/// log(sum(exp(x))).
double log_sum_exp(std::span<const double> logits);
/// Shannon entropy (nats) of softmax(logits).
double softmax_entropy(std::span<const double> logits);

/// Euclidean projection onto the probability simplex.
Vector project_to_simplex(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace weaverec
