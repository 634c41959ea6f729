// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "toy_world.hpp"
#include "weaverec/analysis.hpp"
#include "weaverec/error.hpp"
#include "weaverec/merge.hpp"

namespace weaverec {
namespace {

std::vector<Vector> gaussian_cloud(std::size_t n, std::size_t dim, double shift, RngStream& rng) {
  std::vector<Vector> out(n, Vector(dim));
  for (auto& v : out) {
    for (auto& x : v) {
      x = rng.normal() + shift;
    }
  }
  return out;
}

// Two trained adapters plus a third anchor on the toy world.
struct Anchors {
  testing::ToyWorld world;
  LoraAdapter a;
  LoraAdapter b;
  LoraAdapter c;
};

Anchors make_anchors() {
  Anchors out{testing::make_toy_world(11), {}, {}, {}};
  const auto& t = out.world;
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.max_epochs = 3;
  cfg.learning_rate = 1e-2;
  const auto train_on = [&](std::size_t domain, std::uint64_t seed) {
    cfg.seed = seed;
    return train_adapter(t.base, t.initial,
                         training_examples(t.splits[domain], t.base.dims.max_seq_len), t.valid,
                         cfg)
        .adapter;
  };
  out.a = train_on(0, 1);
  out.b = train_on(0, 2);
  out.c = train_on(1, 3);
  return out;
}

TEST(Mixture, FractionsFollowBernoulli) {
  for (double lambda : {0.0, 1.0, 3.0}) {
    RngStream rng(static_cast<std::uint64_t>(lambda * 10) + 1);
    constexpr std::size_t kDraws = 10000;
    const auto draws = mixture_sample(500, 700, lambda, kDraws, rng);
    double from_source = 0.0;
    for (const auto& d : draws) {
      from_source += d.from_source ? 1.0 : 0.0;
      ASSERT_LT(d.index, d.from_source ? 700u : 500u);
    }
    const double p = lambda / (1.0 + lambda);
    const double sigma = std::sqrt(p * (1.0 - p) / kDraws);
    EXPECT_NEAR(from_source / kDraws, p, 3.0 * sigma + 1e-15) << "lambda " << lambda;
  }
}

TEST(Mixture, TemplatedStreamKeepsElements) {
  const std::vector<int> target{1, 1, 1};
  const std::vector<int> source{2, 2};
  RngStream rng(1);
  const auto pure = mixture_sample<int>(target, source, 0.0, 50, rng);
  EXPECT_EQ(pure, std::vector<int>(50, 1));
  EXPECT_THROW(mixture_sample(3, 2, -1.0, 5, rng), DataError);
}

TEST(HDivergence, SameDistributionIsNearZero) {
  double mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RngStream rng(seed);
    const auto pool = gaussian_cloud(400, 6, 0.0, rng);
    const std::vector<Vector> first(pool.begin(), pool.begin() + 200);
    const std::vector<Vector> second(pool.begin() + 200, pool.end());
    const auto est = estimate_h_divergence(first, second, ProbeConfig{}, rng);
    EXPECT_GE(est.d_hat, 0.0);
    mean += est.d_hat / 5.0;
  }
  EXPECT_LE(mean, 0.15);
}

TEST(HDivergence, SeparableIsNearTwo) {
  RngStream rng(3);
  const auto first = gaussian_cloud(200, 6, 0.0, rng);
  const auto second = gaussian_cloud(200, 6, 10.0, rng);
  const auto est = estimate_h_divergence(first, second, ProbeConfig{}, rng);
  EXPECT_NEAR(est.d_hat, 2.0, 0.1);
  EXPECT_LE(est.d_hat, 2.0);
}

TEST(HDivergence, DisjointVocabulariesUnderAffinityFeatures) {
  const auto t = testing::make_toy_world(2, 2);
  const AffinityFeaturizer featurize(t.base);
  std::vector<Vector> d0;
  std::vector<Vector> d1;
  for (const auto& u : t.world.domains[0].users) {
    d0.push_back(featurize(u.items()));
  }
  for (const auto& u : t.world.domains[1].users) {
    d1.push_back(featurize(u.items()));
  }
  RngStream rng(4);
  EXPECT_NEAR(estimate_h_divergence(d0, d1, ProbeConfig{}, rng).d_hat, 2.0, 0.1);
  EXPECT_EQ(featurize.dimension(), t.base.dims.vocab_size);
}

TEST(HDivergence, RoughlySymmetric) {
  double gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RngStream data(seed);
    const auto x = gaussian_cloud(150, 4, 0.0, data);
    const auto y = gaussian_cloud(150, 4, 0.4, data);
    RngStream r1(seed + 50);
    RngStream r2(seed + 50);
    gap += std::abs(estimate_h_divergence(x, y, ProbeConfig{}, r1).d_hat -
                    estimate_h_divergence(y, x, ProbeConfig{}, r2).d_hat) /
           5.0;
  }
  EXPECT_LE(gap, 0.15);
}

TEST(HDivergence, TooFewSamplesRejected) {
  RngStream rng(1);
  const auto few = gaussian_cloud(kMinDivergenceSamples - 1, 3, 0.0, rng);
  const auto many = gaussian_cloud(100, 3, 0.0, rng);
  EXPECT_THROW(estimate_h_divergence(few, many, ProbeConfig{}, rng), DataError);
}

TEST(Landscape, AnchorsReproduceDirectEvaluation) {
  const auto an = make_anchors();
  const auto& t = an.world;
  const auto grid = landscape_grid(t.base, an.a, an.b, an.c, 5, t.test, Metric::kNdcg5);
  ASSERT_EQ(grid.s_axis.size(), 5u);
  ASSERT_EQ(grid.t_axis.size(), 5u);
  const double direct_a = evaluate(t.base, an.a, t.test, "a", "d0", 7).aggregate.ndcg5;
  const double direct_b = evaluate(t.base, an.b, t.test, "b", "d0", 7).aggregate.ndcg5;
  const double direct_c = evaluate(t.base, an.c, t.test, "c", "d0", 7).aggregate.ndcg5;
  EXPECT_EQ(grid.s_axis[1], 0.0);
  EXPECT_EQ(grid.s_axis[3], 1.0);
  EXPECT_EQ(grid.t_axis[1], 0.0);
  EXPECT_NEAR(grid.values(1, 1), direct_a, 1e-9);
  EXPECT_NEAR(grid.values(3, 1), direct_b, 1e-9);
  ASSERT_EQ(grid.anchors.size(), 3u);
  EXPECT_NEAR(grid.anchors[0].value, direct_a, 1e-9);
  EXPECT_NEAR(grid.anchors[1].value, direct_b, 1e-9);
  EXPECT_NEAR(grid.anchors[2].value, direct_c, 1e-9);

  std::ostringstream csv;
  grid.write_csv(csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "s,t,ndcg@5");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
  }
  EXPECT_EQ(rows, 25);
}

TEST(Landscape, PlaneRecoversThirdAnchor) {
  const auto an = make_anchors();
  const auto plane = make_landscape_plane(an.a, an.b, an.c);
  const auto c = plane.at(plane.s_c, plane.t_c);
  double worst = 0.0;
  const auto x = c.flatten();
  const auto y = an.c.flatten();
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, std::abs(x[i] - y[i]));
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_EQ(plane.at(0.0, 0.0), an.a);
  EXPECT_EQ(plane.at(1.0, 0.0), an.b);
}

TEST(Landscape, DegenerateBasesRejected) {
  const auto an = make_anchors();
  EXPECT_THROW(make_landscape_plane(an.a, an.a, an.c), MergeError);
  const std::vector<LoraAdapter> ends{an.a, an.b};
  const auto mid = weight_average(ends, std::vector<double>{0.5, 0.5});
  EXPECT_THROW(make_landscape_plane(an.a, an.b, mid), MergeError);
  EXPECT_THROW(landscape_grid(an.world.base, an.a, an.b, an.c, 1, an.world.test, Metric::kNdcg5),
               ConfigError);
}

TEST(Sweep, EndpointsAndMidpointMatchDirectEvaluation) {
  const auto an = make_anchors();
  const auto& t = an.world;
  const auto alphas = linspace(0.0, 1.0, 11);
  const auto curve = interpolation_sweep(t.base, an.a, an.b, alphas, t.test);
  ASSERT_EQ(curve.size(), 11u);
  const std::vector<LoraAdapter> pair{an.a, an.b};
  const auto mid = weight_average(pair, std::vector<double>{0.5, 0.5});
  EXPECT_EQ(curve[0].metrics, evaluate(t.base, an.a, t.test, "x", "d0", 7).aggregate);
  EXPECT_EQ(curve[5].metrics, evaluate(t.base, mid, t.test, "x", "d0", 7).aggregate);
  EXPECT_EQ(curve[10].metrics, evaluate(t.base, an.b, t.test, "x", "d0", 7).aggregate);
  for (const auto& p : curve) {
    EXPECT_TRUE(std::isfinite(p.metrics.ndcg5));
  }
  std::ostringstream csv;
  write_sweep_csv(csv, curve);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "alpha,ndcg1,ndcg3,ndcg5,mrr5");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
  }
  EXPECT_EQ(rows, 11);
}

TEST(Linspace, EndpointsExact) {
  const auto v = linspace(-0.5, 1.5, 9);
  EXPECT_EQ(v.front(), -0.5);
  EXPECT_EQ(v.back(), 1.5);
  EXPECT_EQ(v[2], 0.0);
  EXPECT_EQ(v[6], 1.0);
}

}  // namespace
}  // namespace weaverec
