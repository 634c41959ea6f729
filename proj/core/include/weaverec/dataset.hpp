// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "weaverec/rng.hpp"

namespace weaverec {

/// Index into the global item vocabulary (union of all domains).
using ItemId = std::uint32_t;

struct Interaction {
  ItemId item = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// One user's chronologically ordered interactions within a domain.
struct UserSequence {
  std::string user_id;
  std::vector<Interaction> events;

  std::vector<ItemId> items() const;
  std::size_t size() const noexcept { return events.size(); }

  friend bool operator==(const UserSequence&, const UserSequence&) = default;
};

struct CatalogEntry {
  std::string key;  // external item identifier
  std::string title;

  friend bool operator==(const CatalogEntry&, const CatalogEntry&) = default;
};

using Catalog = std::map<ItemId, CatalogEntry>;

struct DomainDataset {
  std::string domain_id;
  std::vector<UserSequence> users;
  Catalog catalog;

  std::size_t interaction_count() const;
  friend bool operator==(const DomainDataset&, const DomainDataset&) = default;
};

/// Throws DataError if a sequence references an item missing from the catalog
/// or has decreasing timestamps.
void validate_dataset(const DomainDataset& dataset);

/// Assigns dense global ids to external item keys, in first-seen order.
class ItemRegistry {
 public:
  ItemId intern(std::string_view key);
  std::optional<ItemId> find(std::string_view key) const;
  const std::string& key(ItemId id) const { return keys_.at(id); }
  std::size_t size() const noexcept { return keys_.size(); }

 private:
  std::unordered_map<std::string, ItemId> ids_;
  std::vector<std::string> keys_;
};

/// Iteratively drops users and items with fewer than `min_count`
/// interactions until nothing changes. Items that lose every interaction
/// leave the catalog. Throws DataError if nothing survives.
DomainDataset five_core_filter(const DomainDataset& dataset, std::size_t min_count = 5);

/// Leave-one-out split of one user.
struct SplitUser {
  std::string user_id;
  std::vector<ItemId> train;
  ItemId valid_target = 0;
  ItemId test_target = 0;

  /// Prefix seen when predicting the validation target.
  std::vector<ItemId> valid_prefix() const { return train; }
  /// Prefix seen when predicting the test target.
  std::vector<ItemId> test_prefix() const;
  /// train + valid + test, i.e. the original sequence.
  std::vector<ItemId> full_sequence() const;
};

struct SplitDataset {
  std::string domain_id;
  std::vector<SplitUser> users;
  Catalog catalog;
};

/// Last item -> test, second-to-last -> validation, the rest -> train.
/// Throws DataError naming the user if a sequence is shorter than 3.
SplitDataset leave_one_out_split(const DomainDataset& dataset);

/// One ground-truth item and `negatives.size()` sampled non-interacted items.
struct CandidateSet {
  ItemId ground_truth = 0;
  std::vector<ItemId> negatives;
  std::uint64_t ordering_seed = 0;

  /// Ground truth followed by the negatives.
  std::vector<ItemId> all() const;
  std::size_t size() const noexcept { return negatives.size() + 1; }
};

inline constexpr std::size_t kDefaultNegatives = 29;

/// Uniform sample without replacement from catalog items the user never
/// interacted with. Throws DataError naming the user if fewer than `k_neg`
/// items are eligible.
CandidateSet sample_candidates(std::string_view user_id, std::span<const ItemId> interacted,
                               ItemId ground_truth, const Catalog& catalog, std::size_t k_neg,
                               RngStream& rng);

/// Ground truth is the last item of `user`.
CandidateSet sample_candidates(const UserSequence& user, const Catalog& catalog,
                               std::size_t k_neg, RngStream& rng);

/// (prefix -> next item) supervision drawn from a domain's train side.
struct TrainingExample {
  std::vector<ItemId> prefix;
  ItemId target = 0;
  std::string domain_id;

  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

/// Every next-item step inside each user's train part, prefixes truncated to
/// the most recent `max_prefix` items.
std::vector<TrainingExample> training_examples(const SplitDataset& split, std::size_t max_prefix);

/// Deterministic subsample to at most `cap` examples (cap == 0 means no cap).
std::vector<TrainingExample> cap_examples(std::vector<TrainingExample> examples, std::size_t cap,
                                          RngStream& rng);

enum class MixMode {
  kFullUnion,  // every target and every source example exactly once
  kRatio,      // every target example once; source examples thinned to an expected lambda:1 ratio
};

/// Builds a hybrid training set from target and source examples. In ratio
/// mode each source example is kept floor(q) times plus once more with
/// probability frac(q), q = lambda * |target| / |source|. The result is
/// shuffled with `rng`.
std::vector<TrainingExample> mix_domains(std::span<const TrainingExample> target,
                                         std::span<const TrainingExample> source, double lambda,
                                         RngStream& rng, MixMode mode = MixMode::kRatio);

struct IngestResult {
  DomainDataset dataset;
  std::size_t duplicates_removed = 0;
};

/// Parses an interactions CSV (header `user_id,item_id,timestamp`) and a
/// titles TSV (`item_id<TAB>title`). Rows of one user are sorted by
/// timestamp; users keep first-appearance order. Exact duplicate rows are
/// dropped and counted. Malformed rows raise DataError with the line number.
IngestResult ingest_interactions(std::istream& interactions, std::istream& titles,
                                 std::string_view domain_id, ItemRegistry& registry);
IngestResult ingest_interactions(const std::filesystem::path& interactions,
                                 const std::filesystem::path& titles, std::string_view domain_id,
                                 ItemRegistry& registry);

/// Inverse of ingest_interactions for the interactions side.
void export_interactions(const DomainDataset& dataset, std::ostream& out);
void export_titles(const DomainDataset& dataset, std::ostream& out);

}  // namespace weaverec
