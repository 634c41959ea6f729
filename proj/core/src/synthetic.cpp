// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/synthetic.hpp"

#include <cmath>

#include "weaverec/error.hpp"
#include "weaverec/numeric.hpp"

namespace weaverec {

namespace {

void check_config(const SyntheticConfig& c) {
  if (c.n_domains == 0 || c.items_per_domain == 0 || c.latent_dim == 0) {
    throw ConfigError("synthetic: n_domains, items_per_domain and latent_dim must be positive");
  }
  if (c.min_length == 0 || c.min_length > c.max_length) {
    throw ConfigError("synthetic: need 0 < min_length <= max_length");
  }
  if (c.max_length > c.items_per_domain) {
    throw ConfigError("synthetic: max_length exceeds items_per_domain (sequences never repeat)");
  }
  if (!(c.correlation >= 0.0 && c.correlation <= 1.0)) {
    throw ConfigError("synthetic: correlation must lie in [0, 1]");
  }
}

Catalog domain_catalog(const SyntheticConfig& c, std::size_t domain) {
  Catalog catalog;
  const auto name = synthetic_domain_id(domain);
  for (std::size_t j = 0; j < c.items_per_domain; ++j) {
    const auto id = static_cast<ItemId>(domain * c.items_per_domain + j);
    catalog.emplace(id, CatalogEntry{name + "-" + std::to_string(j),
                                     "Product " + std::to_string(j) + " of " + name});
  }
  return catalog;
}

// One user's walk over a domain's items, driven by `factors`.
UserSequence sample_sequence(const SyntheticConfig& c, const Matrix& factors, std::size_t domain,
                             std::string user_id, RngStream& rng) {
  const std::size_t m = c.items_per_domain;
  const std::size_t k = c.latent_dim;
  const double scale = c.affinity_scale / std::sqrt(static_cast<double>(k));

  Vector taste(k);
  for (double& t : taste) {
    t = rng.normal();
  }
  const auto length =
      c.min_length + static_cast<std::size_t>(rng.uniform_index(c.max_length - c.min_length + 1));

  UserSequence user;
  user.user_id = std::move(user_id);
  std::vector<bool> visited(m, false);
  Vector query(k);
  Vector logits(m);
  std::int64_t clock = static_cast<std::int64_t>(rng.uniform_index(1'000'000));
  std::size_t prev = m;
  for (std::size_t step = 0; step < length; ++step) {
    for (std::size_t f = 0; f < k; ++f) {
      query[f] = prev == m ? taste[f] : factors(prev, f) + c.taste_weight * taste[f];
    }
    double hi = -HUGE_VAL;
    for (std::size_t j = 0; j < m; ++j) {
      logits[j] = visited[j] ? -HUGE_VAL : scale * dot(query, factors.row(j));
      hi = std::max(hi, logits[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      logits[j] = visited[j] ? 0.0 : std::exp(logits[j] - hi);
      total += logits[j];
    }
    double u = rng.uniform() * total;
    std::size_t pick = m;
    for (std::size_t j = 0; j < m; ++j) {
      if (visited[j]) {
        continue;
      }
      pick = j;
      u -= logits[j];
      if (u < 0.0) {
        break;
      }
    }
    visited[pick] = true;
    clock += 1 + static_cast<std::int64_t>(rng.uniform_index(86'400));
    user.events.push_back(Interaction{static_cast<ItemId>(domain * m + pick), clock});
    prev = pick;
  }
  return user;
}

}  // namespace

std::string synthetic_domain_id(std::size_t domain) { return "d" + std::to_string(domain); }

Vector SyntheticWorld::transition_probabilities(std::size_t domain, std::size_t local_prev) const {
  const Matrix& factors = domain_factors.at(domain);
  const double scale = config.affinity_scale / std::sqrt(static_cast<double>(config.latent_dim));
  Vector logits;
  std::vector<std::size_t> index;
  for (std::size_t j = 0; j < config.items_per_domain; ++j) {
    if (j != local_prev) {
      logits.push_back(scale * dot(factors.row(local_prev), factors.row(j)));
      index.push_back(j);
    }
  }
  const auto p = softmax(logits);
  Vector out(config.items_per_domain, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    out[index[i]] = p[i];
  }
  return out;
}

SyntheticWorld generate_synthetic(const SyntheticConfig& config) {
  check_config(config);
  SyntheticWorld world;
  world.config = config;
  const RngStream root(config.seed);
  const std::size_t m = config.items_per_domain;
  const std::size_t k = config.latent_dim;

  auto shared_rng = root.split("shared");
  world.shared_factors = gaussian_init(m, k, 1.0, shared_rng);

  const double w_shared = std::sqrt(config.correlation);
  const double w_private = std::sqrt(1.0 - config.correlation);
  const auto domain_root = root.split("domain");
  for (std::size_t d = 0; d < config.n_domains; ++d) {
    const auto drng = domain_root.split(d);
    auto private_rng = drng.split("private");
    const Matrix private_factors = gaussian_init(m, k, 1.0, private_rng);
    world.domain_factors.push_back(
        axpy_scale(w_shared, world.shared_factors, scaled(private_factors, w_private)));

    DomainDataset dataset;
    dataset.domain_id = synthetic_domain_id(d);
    dataset.catalog = domain_catalog(config, d);
    auto user_rng = drng.split("users");
    for (std::size_t u = 0; u < config.users_per_domain; ++u) {
      auto rng = user_rng.split(u);
      dataset.users.push_back(sample_sequence(config, world.domain_factors.back(), d,
                                              dataset.domain_id + "-u" + std::to_string(u), rng));
    }
    world.domains.push_back(std::move(dataset));
  }

  world.generic.domain_id = kGenericDomainId;
  for (std::size_t d = 0; d < config.n_domains; ++d) {
    world.generic.catalog.merge(domain_catalog(config, d));
  }
  const auto generic_rng = root.split("generic");
  for (std::size_t u = 0; u < config.generic_users; ++u) {
    auto rng = generic_rng.split(u);
    const auto d = static_cast<std::size_t>(rng.uniform_index(config.n_domains));
    world.generic.users.push_back(sample_sequence(config, world.shared_factors, d,
                                                  "g-u" + std::to_string(u), rng));
  }
  return world;
}

Vector local_index_features(const SyntheticWorld& world, const UserSequence& user) {
  Vector features(world.config.items_per_domain, 0.0);
  if (user.events.empty()) {
    return features;
  }
  const double w = 1.0 / static_cast<double>(user.events.size());
  for (const auto& e : user.events) {
    features[world.local_index(e.item)] += w;
  }
  return features;
}

}  // namespace weaverec
