// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "weaverec/dataset.hpp"
#include "weaverec/matrix.hpp"

namespace weaverec {

/// Generator for a small world of related domains.
///
/// Domain d owns items [d * items_per_domain, (d + 1) * items_per_domain).
/// Local item j of every domain shares the latent factor `shared_j`, and its
/// domain factor is sqrt(rho) * shared_j + sqrt(1 - rho) * private_dj. A
/// user's next item is a softmax over affinities between the previous item
/// (plus a per-user taste vector) and every unvisited item of the domain.
struct SyntheticConfig {
  std::size_t n_domains = 3;
  std::size_t users_per_domain = 500;
  std::size_t items_per_domain = 100;
  std::size_t latent_dim = 8;
  double correlation = 0.3;
  std::size_t min_length = 5;
  std::size_t max_length = 12;
  double affinity_scale = 3.0;
  double taste_weight = 0.5;
  /// Users of the generic pretraining domain. Their sequences stay inside one
  /// domain's items but follow the shared factors only.
  std::size_t generic_users = 1000;
  std::uint64_t seed = 1;
};

struct SyntheticWorld {
  SyntheticConfig config;
  std::vector<DomainDataset> domains;  // domains[0] is the conventional target
  DomainDataset generic;
  Matrix shared_factors;              // items_per_domain x latent_dim
  std::vector<Matrix> domain_factors;  // per domain, items_per_domain x latent_dim

  std::size_t vocab_size() const { return config.n_domains * config.items_per_domain; }
  ItemId global_item(std::size_t domain, std::size_t local) const {
    return static_cast<ItemId>(domain * config.items_per_domain + local);
  }
  std::size_t local_index(ItemId item) const { return item % config.items_per_domain; }

  /// Taste-free transition distribution over the domain's local items when
  /// nothing has been visited except `local_prev`.
  Vector transition_probabilities(std::size_t domain, std::size_t local_prev) const;
};

std::string synthetic_domain_id(std::size_t domain);
inline constexpr const char* kGenericDomainId = "generic";

/// Each domain draws from its own substream, so domain d is identical for
/// any n_domains > d under a fixed seed.
SyntheticWorld generate_synthetic(const SyntheticConfig& config);

/// Vocabulary-agnostic sequence features: normalized histogram of local item
/// indices. Two domains are indistinguishable under these features exactly
/// when their item factors coincide.
Vector local_index_features(const SyntheticWorld& world, const UserSequence& user);

}  // namespace weaverec
