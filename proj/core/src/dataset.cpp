// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>
#include <unordered_set>

#include "weaverec/error.hpp"

namespace weaverec {

std::vector<ItemId> UserSequence::items() const {
  std::vector<ItemId> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    out.push_back(e.item);
  }
  return out;
}

std::size_t DomainDataset::interaction_count() const {
  std::size_t n = 0;
  for (const auto& u : users) {
    n += u.size();
  }
  return n;
}

void validate_dataset(const DomainDataset& dataset) {
  for (const auto& user : dataset.users) {
    for (std::size_t i = 0; i < user.events.size(); ++i) {
      const auto& e = user.events[i];
      if (!dataset.catalog.contains(e.item)) {
        throw DataError("domain " + dataset.domain_id + ": user " + user.user_id +
                        " references item " + std::to_string(e.item) + " missing from catalog");
      }
      if (i > 0 && e.timestamp < user.events[i - 1].timestamp) {
        throw DataError("domain " + dataset.domain_id + ": user " + user.user_id +
                        " has decreasing timestamps");
      }
    }
  }
}

ItemId ItemRegistry::intern(std::string_view key) {
  const std::string k(key);
  if (auto it = ids_.find(k); it != ids_.end()) {
    return it->second;
  }
  const auto id = static_cast<ItemId>(keys_.size());
  ids_.emplace(k, id);
  keys_.push_back(k);
  return id;
}

std::optional<ItemId> ItemRegistry::find(std::string_view key) const {
  if (auto it = ids_.find(std::string(key)); it != ids_.end()) {
    return it->second;
  }
  return std::nullopt;
}

DomainDataset five_core_filter(const DomainDataset& dataset, std::size_t min_count) {
  DomainDataset out = dataset;
  while (true) {
    std::map<ItemId, std::size_t> item_counts;
    for (const auto& u : out.users) {
      for (const auto& e : u.events) {
        ++item_counts[e.item];
      }
    }
    bool changed = false;
    std::vector<UserSequence> kept;
    kept.reserve(out.users.size());
    for (auto& u : out.users) {
      std::vector<Interaction> events;
      events.reserve(u.events.size());
      for (const auto& e : u.events) {
        if (item_counts[e.item] >= min_count) {
          events.push_back(e);
        }
      }
      changed = changed || events.size() != u.events.size();
      if (events.size() >= min_count) {
        u.events = std::move(events);
        kept.push_back(std::move(u));
      } else {
        changed = true;
      }
    }
    out.users = std::move(kept);
    if (!changed) {
      break;
    }
  }
  if (out.users.empty()) {
    throw DataError("five_core_filter: domain " + dataset.domain_id +
                    " is empty after filtering");
  }
  std::set<ItemId> used;
  for (const auto& u : out.users) {
    for (const auto& e : u.events) {
      used.insert(e.item);
    }
  }
  std::erase_if(out.catalog, [&used](const auto& entry) { return !used.contains(entry.first); });
  return out;
}

std::vector<ItemId> SplitUser::test_prefix() const {
  auto prefix = train;
  prefix.push_back(valid_target);
  return prefix;
}

std::vector<ItemId> SplitUser::full_sequence() const {
  auto seq = test_prefix();
  seq.push_back(test_target);
  return seq;
}

SplitDataset leave_one_out_split(const DomainDataset& dataset) {
  SplitDataset split;
  split.domain_id = dataset.domain_id;
  split.catalog = dataset.catalog;
  split.users.reserve(dataset.users.size());
  for (const auto& user : dataset.users) {
    if (user.size() < 3) {
      throw DataError("leave_one_out_split: user " + user.user_id + " in domain " +
                      dataset.domain_id + " has only " + std::to_string(user.size()) +
                      " interactions (need 3)");
    }
    auto items = user.items();
    SplitUser su;
    su.user_id = user.user_id;
    su.test_target = items.back();
    su.valid_target = items[items.size() - 2];
    items.resize(items.size() - 2);
    su.train = std::move(items);
    split.users.push_back(std::move(su));
  }
  return split;
}

std::vector<ItemId> CandidateSet::all() const {
  std::vector<ItemId> out;
  out.reserve(size());
  out.push_back(ground_truth);
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

CandidateSet sample_candidates(std::string_view user_id, std::span<const ItemId> interacted,
                               ItemId ground_truth, const Catalog& catalog, std::size_t k_neg,
                               RngStream& rng) {
  const std::unordered_set<ItemId> seen(interacted.begin(), interacted.end());
  std::vector<ItemId> eligible;
  eligible.reserve(catalog.size());
  for (const auto& [id, entry] : catalog) {
    if (id != ground_truth && !seen.contains(id)) {
      eligible.push_back(id);
    }
  }
  if (eligible.size() < k_neg) {
    throw DataError("sample_candidates: user " + std::string(user_id) + " has only " +
                    std::to_string(eligible.size()) + " non-interacted items, need " +
                    std::to_string(k_neg));
  }
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (std::size_t i = 0; i < k_neg; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(k_neg);
  CandidateSet set;
  set.ground_truth = ground_truth;
  set.negatives = std::move(eligible);
  set.ordering_seed = rng.next_u64();
  return set;
}

CandidateSet sample_candidates(const UserSequence& user, const Catalog& catalog,
                               std::size_t k_neg, RngStream& rng) {
  if (user.events.empty()) {
    throw DataError("sample_candidates: user " + user.user_id + " has no interactions");
  }
  const auto items = user.items();
  return sample_candidates(user.user_id, items, items.back(), catalog, k_neg, rng);
}

std::vector<TrainingExample> training_examples(const SplitDataset& split, std::size_t max_prefix) {
  std::vector<TrainingExample> out;
  for (const auto& user : split.users) {
    for (std::size_t t = 1; t < user.train.size(); ++t) {
      const std::size_t begin = t > max_prefix ? t - max_prefix : 0;
      TrainingExample ex;
      ex.prefix.assign(user.train.begin() + static_cast<std::ptrdiff_t>(begin),
                       user.train.begin() + static_cast<std::ptrdiff_t>(t));
      ex.target = user.train[t];
      ex.domain_id = split.domain_id;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<TrainingExample> cap_examples(std::vector<TrainingExample> examples, std::size_t cap,
                                          RngStream& rng) {
  if (cap == 0 || examples.size() <= cap) {
    return examples;
  }
  rng.shuffle(examples);
  examples.resize(cap);
  return examples;
}

std::vector<TrainingExample> mix_domains(std::span<const TrainingExample> target,
                                         std::span<const TrainingExample> source, double lambda,
                                         RngStream& rng, MixMode mode) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw DataError("mix_domains: lambda must be a finite non-negative number");
  }
  std::vector<TrainingExample> out(target.begin(), target.end());
  if (mode == MixMode::kFullUnion) {
    out.insert(out.end(), source.begin(), source.end());
  } else if (lambda > 0.0 && !source.empty()) {
    const double q =
        lambda * static_cast<double>(target.size()) / static_cast<double>(source.size());
    const double whole = std::floor(q);
    const double frac = q - whole;
    for (const auto& ex : source) {
      auto copies = static_cast<std::size_t>(whole);
      if (frac > 0.0 && rng.bernoulli(frac)) {
        ++copies;
      }
      for (std::size_t c = 0; c < copies; ++c) {
        out.push_back(ex);
      }
    }
  }
  rng.shuffle(out);
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

[[noreturn]] void parse_failure(std::string_view file, std::size_t line, const std::string& what) {
  throw DataError(std::string(file) + " line " + std::to_string(line) + ": " + what);
}

}  // namespace

IngestResult ingest_interactions(std::istream& interactions, std::istream& titles,
                                 std::string_view domain_id, ItemRegistry& registry) {
  IngestResult result;
  result.dataset.domain_id = std::string(domain_id);

  std::map<std::string, std::string> title_by_key;
  std::vector<std::string> title_order;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(titles, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      parse_failure("titles", line_no, "expected item_id<TAB>title");
    }
    const auto key = trim(std::string_view(line).substr(0, tab));
    if (key.empty()) {
      parse_failure("titles", line_no, "empty item_id");
    }
    std::string title(trim(std::string_view(line).substr(tab + 1)));
    if (title_by_key.insert_or_assign(std::string(key), std::move(title)).second) {
      title_order.emplace_back(key);
    }
  }

  struct Row {
    std::size_t user_order;
    std::int64_t timestamp;
    std::size_t line;
    std::string item_key;
  };
  std::vector<std::string> user_order;
  std::map<std::string, std::size_t> user_index;
  std::vector<Row> rows;
  std::set<std::tuple<std::string, std::string, std::int64_t>> seen;

  line_no = 0;
  bool header_seen = false;
  while (std::getline(interactions, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    const auto fields = split_fields(line, ',');
    if (!header_seen) {
      header_seen = true;
      if (fields.size() != 3 || trim(fields[0]) != "user_id" || trim(fields[1]) != "item_id" ||
          trim(fields[2]) != "timestamp") {
        parse_failure("interactions", line_no, "expected header user_id,item_id,timestamp");
      }
      continue;
    }
    if (fields.size() != 3) {
      parse_failure("interactions", line_no,
                    "expected 3 fields, got " + std::to_string(fields.size()));
    }
    const auto user = trim(fields[0]);
    const auto item = trim(fields[1]);
    const auto ts_text = trim(fields[2]);
    if (user.empty() || item.empty()) {
      parse_failure("interactions", line_no, "empty user_id or item_id");
    }
    if (ts_text.empty()) {
      parse_failure("interactions", line_no, "missing timestamp");
    }
    std::int64_t ts = 0;
    const auto [end, ec] = std::from_chars(ts_text.data(), ts_text.data() + ts_text.size(), ts);
    if (ec != std::errc() || end != ts_text.data() + ts_text.size()) {
      parse_failure("interactions", line_no,
                    "timestamp '" + std::string(ts_text) + "' is not an integer");
    }
    if (!title_by_key.contains(std::string(item))) {
      parse_failure("interactions", line_no, "item " + std::string(item) + " has no title");
    }
    if (!seen.emplace(std::string(user), std::string(item), ts).second) {
      ++result.duplicates_removed;
      continue;
    }
    auto [it, inserted] = user_index.emplace(std::string(user), user_order.size());
    if (inserted) {
      user_order.emplace_back(user);
    }
    rows.push_back(Row{it->second, ts, line_no, std::string(item)});
  }
  if (!header_seen) {
    throw DataError("interactions: missing header line");
  }

  // Ids follow titles-file order so re-ingesting an export reproduces them.
  for (const auto& key : title_order) {
    const ItemId id = registry.intern(key);
    result.dataset.catalog.emplace(id, CatalogEntry{key, title_by_key[key]});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.user_order, a.timestamp) < std::tie(b.user_order, b.timestamp);
  });
  result.dataset.users.resize(user_order.size());
  for (std::size_t u = 0; u < user_order.size(); ++u) {
    result.dataset.users[u].user_id = user_order[u];
  }
  for (const auto& row : rows) {
    const ItemId id = *registry.find(row.item_key);
    result.dataset.users[row.user_order].events.push_back(Interaction{id, row.timestamp});
  }
  validate_dataset(result.dataset);
  return result;
}

IngestResult ingest_interactions(const std::filesystem::path& interactions,
                                 const std::filesystem::path& titles, std::string_view domain_id,
                                 ItemRegistry& registry) {
  std::ifstream inter_in(interactions);
  if (!inter_in) {
    throw DataError("cannot open interactions file " + interactions.string());
  }
  std::ifstream titles_in(titles);
  if (!titles_in) {
    throw DataError("cannot open titles file " + titles.string());
  }
  return ingest_interactions(inter_in, titles_in, domain_id, registry);
}

void export_interactions(const DomainDataset& dataset, std::ostream& out) {
  out << "user_id,item_id,timestamp\n";
  for (const auto& user : dataset.users) {
    for (const auto& e : user.events) {
      out << user.user_id << ',' << dataset.catalog.at(e.item).key << ',' << e.timestamp << '\n';
    }
  }
}

void export_titles(const DomainDataset& dataset, std::ostream& out) {
  for (const auto& [id, entry] : dataset.catalog) {
    out << entry.key << '\t' << entry.title << '\n';
  }
}

}  // namespace weaverec
