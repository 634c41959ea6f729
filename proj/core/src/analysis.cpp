// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <numeric>
#include <ostream>

#include "weaverec/error.hpp"
#include "weaverec/merge.hpp"
#include "weaverec/numeric.hpp"

namespace weaverec {

std::vector<MixtureDraw> mixture_sample(std::size_t target_size, std::size_t source_size,
                                        double lambda, std::size_t draws, RngStream& rng) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw DataError("mixture_sample: lambda must be a finite non-negative number");
  }
  const double p_source = lambda / (1.0 + lambda);
  if (target_size == 0 && p_source < 1.0) {
    throw DataError("mixture_sample: empty target pool");
  }
  if (source_size == 0 && p_source > 0.0) {
    throw DataError("mixture_sample: empty source pool");
  }
  std::vector<MixtureDraw> out;
  out.reserve(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    MixtureDraw d;
    d.from_source = p_source > 0.0 && rng.bernoulli(p_source);
    d.index = static_cast<std::size_t>(rng.uniform_index(d.from_source ? source_size : target_size));
    out.push_back(d);
  }
  return out;
}

void LinearProbe::fit(std::span<const Vector> features, std::span<const int> labels,
                      const ProbeConfig& config) {
  if (features.empty() || features.size() != labels.size()) {
    throw Error("LinearProbe: need one label per feature vector");
  }
  const std::size_t n = features.size();
  const std::size_t dim = features.front().size();
  mean_.assign(dim, 0.0);
  inv_std_.assign(dim, 0.0);
  for (const auto& x : features) {
    for (std::size_t j = 0; j < dim; ++j) {
      mean_[j] += x[j];
    }
  }
  for (double& m : mean_) {
    m /= static_cast<double>(n);
  }
  for (const auto& x : features) {
    for (std::size_t j = 0; j < dim; ++j) {
      inv_std_[j] += (x[j] - mean_[j]) * (x[j] - mean_[j]);
    }
  }
  for (double& s : inv_std_) {
    const double sd = std::sqrt(s / static_cast<double>(n));
    s = sd > 1e-12 ? 1.0 / sd : 0.0;
  }
  std::vector<Vector> z(n, Vector(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      z[i][j] = (features[i][j] - mean_[j]) * inv_std_[j];
    }
  }

  weights_.assign(dim, 0.0);
  bias_ = 0.0;
  Vector grad(dim);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double logit = dot(weights_, z[i]) + bias_;
      const double p = 1.0 / (1.0 + std::exp(-logit));
      const double err = p - static_cast<double>(labels[i]);
      for (std::size_t j = 0; j < dim; ++j) {
        grad[j] += err * z[i][j];
      }
      grad_b += err;
    }
    for (std::size_t j = 0; j < dim; ++j) {
      weights_[j] -= config.learning_rate * (grad[j] / static_cast<double>(n) + config.l2 * weights_[j]);
    }
    bias_ -= config.learning_rate * grad_b / static_cast<double>(n);
  }
}

double LinearProbe::decision(std::span<const double> x) const {
  double s = bias_;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    s += weights_[j] * (x[j] - mean_[j]) * inv_std_[j];
  }
  return s;
}

double LinearProbe::accuracy(std::span<const Vector> features, std::span<const int> labels) const {
  if (features.empty()) {
    return 0.0;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    correct += predict(features[i]) == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(features.size());
}

std::string DivergenceEstimate::to_json() const {
  nlohmann::json j{{"first", first},
                   {"second", second},
                   {"accuracy", accuracy},
                   {"d_hat", d_hat},
                   {"train_size", train_size},
                   {"holdout_size", holdout_size},
                   {"seed", seed},
                   {"probe",
                    {{"l2", probe.l2},
                     {"learning_rate", probe.learning_rate},
                     {"epochs", probe.epochs},
                     {"holdout_fraction", probe.holdout_fraction}}}};
  return j.dump(2);
}

DivergenceEstimate estimate_h_divergence(std::span<const Vector> first,
                                         std::span<const Vector> second,
                                         const ProbeConfig& probe, RngStream& rng) {
  if (first.size() < kMinDivergenceSamples || second.size() < kMinDivergenceSamples) {
    throw DataError("estimate_h_divergence: need at least " +
                    std::to_string(kMinDivergenceSamples) + " examples per side (got " +
                    std::to_string(first.size()) + " and " + std::to_string(second.size()) + ")");
  }
  if (!(probe.holdout_fraction > 0.0 && probe.holdout_fraction < 1.0)) {
    throw ConfigError("probe holdout fraction must lie in (0, 1)");
  }
  DivergenceEstimate est;
  est.probe = probe;
  est.seed = rng.key();

  std::vector<Vector> train_x;
  std::vector<int> train_y;
  std::vector<Vector> test_x;
  std::vector<int> test_y;
  const auto split_side = [&](std::span<const Vector> side, int label) {
    std::vector<std::size_t> order(side.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const auto held = static_cast<std::size_t>(
        std::llround(probe.holdout_fraction * static_cast<double>(side.size())));
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i < held) {
        test_x.push_back(side[order[i]]);
        test_y.push_back(label);
      } else {
        train_x.push_back(side[order[i]]);
        train_y.push_back(label);
      }
    }
  };
  split_side(first, 0);
  split_side(second, 1);

  LinearProbe model;
  model.fit(train_x, train_y, probe);
  est.accuracy = model.accuracy(test_x, test_y);
  est.d_hat = std::clamp(2.0 * (2.0 * est.accuracy - 1.0), 0.0, 2.0);
  est.train_size = train_x.size();
  est.holdout_size = test_x.size();
  return est;
}

AffinityFeaturizer::AffinityFeaturizer(const BaseModel& base, double temperature)
    : unit_embeddings_(base.item_embeddings), temperature_(temperature) {
  if (!(temperature > 0.0)) {
    throw ConfigError("affinity temperature must be positive");
  }
  for (std::size_t i = 0; i < unit_embeddings_.rows(); ++i) {
    auto row = unit_embeddings_.row(i);
    const double n = norm2(row);
    if (n > 0.0) {
      for (double& x : row) {
        x /= n;
      }
    }
  }
}

Vector AffinityFeaturizer::operator()(std::span<const ItemId> sequence) const {
  const std::size_t vocab = unit_embeddings_.rows();
  Vector features(vocab, 0.0);
  if (sequence.empty()) {
    return features;
  }
  Vector logits(vocab);
  for (ItemId item : sequence) {
    if (item >= vocab) {
      throw DataError("affinity features: item " + std::to_string(item) +
                      " is outside the base vocabulary");
    }
    const auto e = unit_embeddings_.row(item);
    for (std::size_t v = 0; v < vocab; ++v) {
      logits[v] = temperature_ * dot(e, unit_embeddings_.row(v));
    }
    const auto p = softmax(logits);
    for (std::size_t v = 0; v < vocab; ++v) {
      features[v] += p[v];
    }
  }
  for (double& f : features) {
    f /= static_cast<double>(sequence.size());
  }
  return features;
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count < 2) {
    throw ConfigError("linspace needs at least two points");
  }
  std::vector<double> out(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = lo + step * static_cast<double>(i);
  }
  out.back() = hi;
  return out;
}

LoraAdapter LandscapePlane::at(double s, double t) const {
  const auto a = origin.flatten();
  const auto b = end.flatten();
  Vector p(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    p[i] = (1.0 - s) * a[i] + s * b[i] + t * v[i];
  }
  LoraAdapter out = origin;
  out.assign(p);
  return out;
}

LandscapePlane make_landscape_plane(const LoraAdapter& a, const LoraAdapter& b,
                                    const LoraAdapter& c) {
  const std::array<LoraAdapter, 3> trio{a, b, c};
  // Shape validation shares the merge operators' checks.
  (void)weight_average(trio, std::array<double, 3>{1.0, 0.0, 0.0});
  LandscapePlane plane;
  plane.origin = a;
  plane.end = b;
  const auto fa = a.flatten();
  const auto fb = b.flatten();
  const auto fc = c.flatten();
  plane.u.resize(fa.size());
  Vector w(fa.size());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    plane.u[i] = fb[i] - fa[i];
    w[i] = fc[i] - fa[i];
  }
  const double nu = norm2(plane.u);
  if (!(nu > 1e-12)) {
    throw MergeError("landscape: degenerate basis, anchors a and b coincide");
  }
  const double nw_raw = norm2(w);
  plane.s_c = dot(w, plane.u) / (nu * nu);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] -= plane.s_c * plane.u[i];
  }
  const double nw = norm2(w);
  if (!(nw > 1e-9 * std::max(nw_raw, nu))) {
    throw MergeError("landscape: degenerate basis, anchor c is collinear with a and b");
  }
  plane.v.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    plane.v[i] = w[i] * (nu / nw);
  }
  plane.t_c = nw / nu;
  return plane;
}

LandscapeGrid landscape_grid(const BaseModel& base, const LoraAdapter& a, const LoraAdapter& b,
                             const LoraAdapter& c, std::size_t grid_res,
                             std::span<const EvalCase> cases, Metric metric) {
  if (grid_res < 2) {
    throw ConfigError("landscape grid resolution must be at least 2");
  }
  const auto plane = make_landscape_plane(a, b, c);
  const auto score = [&](double s, double t) {
    const auto point = plane.at(s, t);
    return evaluate(base, point, cases, "landscape", "", 0).aggregate.get(metric);
  };
  LandscapeGrid grid;
  grid.metric = metric;
  grid.s_c = plane.s_c;
  grid.t_c = plane.t_c;
  grid.s_axis = linspace(-0.5, 1.5, grid_res);
  grid.t_axis = linspace(-0.5, 1.5, grid_res);
  for (double& t : grid.t_axis) {
    t *= plane.t_c;
  }
  grid.values = Matrix(grid_res, grid_res);
  for (std::size_t i = 0; i < grid_res; ++i) {
    for (std::size_t j = 0; j < grid_res; ++j) {
      grid.values(i, j) = score(grid.s_axis[i], grid.t_axis[j]);
    }
  }
  grid.anchors.push_back({"a", 0.0, 0.0, score(0.0, 0.0)});
  grid.anchors.push_back({"b", 1.0, 0.0, score(1.0, 0.0)});
  grid.anchors.push_back({"c", plane.s_c, plane.t_c, score(plane.s_c, plane.t_c)});
  return grid;
}

void LandscapeGrid::write_csv(std::ostream& out) const {
  out << "s,t," << metric_name(metric) << '\n';
  out << std::setprecision(10);
  for (std::size_t i = 0; i < s_axis.size(); ++i) {
    for (std::size_t j = 0; j < t_axis.size(); ++j) {
      out << s_axis[i] << ',' << t_axis[j] << ',' << values(i, j) << '\n';
    }
  }
}

std::vector<SweepPoint> interpolation_sweep(const BaseModel& base, const LoraAdapter& target,
                                            const LoraAdapter& hybrid,
                                            std::span<const double> alphas,
                                            std::span<const EvalCase> cases) {
  std::vector<SweepPoint> curve;
  curve.reserve(alphas.size());
  for (double alpha : alphas) {
    const auto merged = pair_interpolate(target, hybrid, alpha);
    curve.push_back({alpha, evaluate(base, merged, cases, "sweep", "", 0).aggregate});
  }
  return curve;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> curve) {
  out << "alpha,ndcg1,ndcg3,ndcg5,mrr5\n";
  out << std::setprecision(10);
  for (const auto& p : curve) {
    out << p.alpha << ',' << p.metrics.ndcg1 << ',' << p.metrics.ndcg3 << ',' << p.metrics.ndcg5
        << ',' << p.metrics.mrr5 << '\n';
  }
}

}  // namespace weaverec
