// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "weaverec/evaluator.hpp"
#include "weaverec/model.hpp"
#include "weaverec/rng.hpp"

namespace weaverec {

struct MixtureDraw {
  bool from_source = false;
  std::size_t index = 0;  // position inside the chosen pool
};

/// `draws` independent draws; each comes from the source pool with
/// probability lambda / (1 + lambda) and is uniform within its pool.
std::vector<MixtureDraw> mixture_sample(std::size_t target_size, std::size_t source_size,
                                        double lambda, std::size_t draws, RngStream& rng);

template <typename T>
std::vector<T> mixture_sample(std::span<const T> target, std::span<const T> source,
                              double lambda, std::size_t draws, RngStream& rng) {
  std::vector<T> out;
  out.reserve(draws);
  for (const auto& d : mixture_sample(target.size(), source.size(), lambda, draws, rng)) {
    out.push_back(d.from_source ? source[d.index] : target[d.index]);
  }
  return out;
}

struct ProbeConfig {
  double l2 = 1e-3;
  double learning_rate = 0.5;
  std::size_t epochs = 300;
  /// Share of each side held out for measuring accuracy.
  double holdout_fraction = 0.5;
};

/// L2-regularized logistic regression trained by full-batch gradient descent
/// on standardized features.
class LinearProbe {
 public:
  void fit(std::span<const Vector> features, std::span<const int> labels,
           const ProbeConfig& config);
  double decision(std::span<const double> x) const;
  int predict(std::span<const double> x) const { return decision(x) > 0.0 ? 1 : 0; }
  double accuracy(std::span<const Vector> features, std::span<const int> labels) const;

 private:
  Vector mean_;
  Vector inv_std_;
  Vector weights_;
  double bias_ = 0.0;
};

struct DivergenceEstimate {
  std::string first;
  std::string second;
  double accuracy = 0.0;  // held-out probe accuracy
  double d_hat = 0.0;     // 2 (2 acc - 1), clipped to [0, 2]
  std::size_t train_size = 0;
  std::size_t holdout_size = 0;
  ProbeConfig probe;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

inline constexpr std::size_t kMinDivergenceSamples = 20;

DivergenceEstimate estimate_h_divergence(std::span<const Vector> first,
                                         std::span<const Vector> second,
                                         const ProbeConfig& probe, RngStream& rng);

/// Sequence featurizer over frozen base embeddings: the mean over the
/// sequence of softmax_v(tau * cos(e_item, e_v)).
class AffinityFeaturizer {
 public:
  AffinityFeaturizer(const BaseModel& base, double temperature = 10.0);
  Vector operator()(std::span<const ItemId> sequence) const;
  std::size_t dimension() const { return unit_embeddings_.rows(); }

 private:
  Matrix unit_embeddings_;  // rows scaled to unit length
  double temperature_;
};

struct LandscapeAnchor {
  std::string label;
  double s = 0.0;
  double t = 0.0;
  double value = 0.0;  // metric of the reconstructed point
};

struct LandscapeGrid {
  std::vector<double> s_axis;
  std::vector<double> t_axis;
  Matrix values;  // s index x t index
  double t_c = 0.0;
  double s_c = 0.0;
  Metric metric = Metric::kNdcg5;
  std::vector<LandscapeAnchor> anchors;

  void write_csv(std::ostream& out) const;
};

/// Point theta_a + s u + t v in factor space, with u = theta_b - theta_a and v
/// the component of theta_c - theta_a orthogonal to u rescaled to |u|. The
/// (s, t) = (1, 0) point is computed as theta_b itself.
struct LandscapePlane {
  LoraAdapter origin;
  LoraAdapter end;
  Vector u;
  Vector v;
  double s_c = 0.0;
  double t_c = 0.0;

  LoraAdapter at(double s, double t) const;
};

LandscapePlane make_landscape_plane(const LoraAdapter& a, const LoraAdapter& b,
                                    const LoraAdapter& c);

LandscapeGrid landscape_grid(const BaseModel& base, const LoraAdapter& a, const LoraAdapter& b,
                             const LoraAdapter& c, std::size_t grid_res,
                             std::span<const EvalCase> cases, Metric metric);

struct SweepPoint {
  double alpha = 0.0;
  MetricSummary metrics;
};

std::vector<SweepPoint> interpolation_sweep(const BaseModel& base, const LoraAdapter& target,
                                            const LoraAdapter& hybrid,
                                            std::span<const double> alphas,
                                            std::span<const EvalCase> cases);

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> curve);

/// Evenly spaced values from `lo` to `hi` inclusive.
std::vector<double> linspace(double lo, double hi, std::size_t count);

}  // namespace weaverec
