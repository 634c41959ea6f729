// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "weaverec/error.hpp"

namespace weaverec {

Matrix gaussian_init(std::size_t rows, std::size_t cols, double sigma, RngStream& rng) {
  if (!(sigma > 0.0)) {
    throw NumericError("gaussian_init: sigma must be positive");
  }
  Matrix m(rows, cols);
  for (double& v : m.data()) {
    v = sigma * rng.normal();
  }
  return m;
}

Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> theta, double eps) {
  if (!(eps > 0.0)) {
    throw NumericError("finite_diff_grad: eps must be positive");
  }
  Vector point(theta.begin(), theta.end());
  Vector grad(theta.size(), 0.0);
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + eps;
    const double up = f(point);
    point[i] = saved - eps;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: objective is not finite near coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) {
    throw NumericError("log_sum_exp: empty input");
  }
  const double hi = *std::max_element(logits.begin(), logits.end());
  double acc = 0.0;
  for (double z : logits) {
    acc += std::exp(z - hi);
  }
  return hi + std::log(acc);
}

Vector softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  Vector p(logits.size());
  std::transform(logits.begin(), logits.end(), p.begin(),
                 [lse](double z) { return std::exp(z - lse); });
  return p;
}

double softmax_entropy(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  double h = 0.0;
  for (double z : logits) {
    const double logp = z - lse;
    h -= std::exp(logp) * logp;
  }
  return h;
}

Vector project_to_simplex(std::span<const double> v) {
  // Held & Wolfe style: sort descending, find the largest feasible support.
  Vector sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumulative += sorted[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0.0) {
      theta = candidate;
    }
  }
  Vector out(v.size());
  std::transform(v.begin(), v.end(), out.begin(),
                 [theta](double x) { return std::max(0.0, x - theta); });
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace weaverec
