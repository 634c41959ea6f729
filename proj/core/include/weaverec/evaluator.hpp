// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weaverec/dataset.hpp"
#include "weaverec/model.hpp"

namespace weaverec {

enum class Metric { kNdcg1 = 0, kNdcg3, kNdcg5, kMrr5 };

inline constexpr std::array<Metric, 4> kAllMetrics{Metric::kNdcg1, Metric::kNdcg3,
                                                   Metric::kNdcg5, Metric::kMrr5};

std::string_view metric_name(Metric metric) noexcept;
Metric parse_metric(std::string_view name);

/// One ranking problem: a prefix plus a frozen candidate set.
struct EvalCase {
  std::string user_id;
  std::vector<ItemId> prefix;
  CandidateSet candidates;
};

enum class EvalSide { kValidation, kTest };

/// Candidate sets depend only on (candidate_seed, domain, user, side), so every
/// method evaluated with the same seed sees identical candidates.
std::vector<EvalCase> make_eval_cases(const SplitDataset& split, EvalSide side,
                                      std::uint64_t candidate_seed,
                                      std::size_t negatives = kDefaultNegatives);

/// Sorts candidates by descending score, ties broken by ascending item id.
std::vector<ItemId> rank_by_scores(std::span<const double> logits,
                                   std::span<const ItemId> candidates);

std::vector<ItemId> rank_candidates(const BaseModel& base, AdapterView adapter,
                                    std::span<const ItemId> prefix,
                                    const CandidateSet& candidates);

/// 1-based position of `ground_truth`; throws EvalError when absent.
std::size_t rank_of(std::span<const ItemId> ranking, ItemId ground_truth);

double ndcg_at_k(std::span<const ItemId> ranking, ItemId ground_truth, std::size_t k);
double mrr_at_k(std::span<const ItemId> ranking, ItemId ground_truth, std::size_t k);

struct MetricSummary {
  double ndcg1 = 0.0;
  double ndcg3 = 0.0;
  double ndcg5 = 0.0;
  double mrr5 = 0.0;

  double get(Metric metric) const;
  friend bool operator==(const MetricSummary&, const MetricSummary&) = default;
};

struct UserMetrics {
  std::string user_id;
  MetricSummary metrics;
  std::size_t rank = 0;
};

MetricSummary metrics_for_rank(std::size_t rank);

struct EvalReport {
  std::string method;
  std::string domain_id;
  std::vector<UserMetrics> users;
  MetricSummary aggregate;
  std::uint64_t seed = 0;
  std::uint64_t candidate_seed = 0;
};

EvalReport evaluate(const BaseModel& base, AdapterView adapter, std::span<const EvalCase> cases,
                    std::string_view method, std::string_view domain_id,
                    std::uint64_t candidate_seed, std::uint64_t seed = 0);

/// Convenience: test-side evaluation of a split.
EvalReport evaluate(const BaseModel& base, AdapterView adapter, const SplitDataset& split,
                    std::uint64_t candidate_seed, std::string_view method);

/// Validation MRR@5 only; the quantity used for early stopping.
double validation_mrr5(const BaseModel& base, AdapterView adapter,
                       std::span<const EvalCase> cases);

/// Two-sided paired t-test over per-user differences of `metric`.
double paired_significance(const EvalReport& a, const EvalReport& b,
                           Metric metric = Metric::kNdcg5);

/// Paired t-test p-value for raw differences. All-zero differences give 1 and
/// a constant nonzero difference gives 0.
double paired_t_pvalue(std::span<const double> differences);

MetricSummary transfer_gain(const EvalReport& merged, const EvalReport& target_only);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);

/// One row per (method, metric). The p column compares against `baseline` when
/// given, otherwise it is left empty.
void write_summary_csv(std::ostream& out, std::span<const EvalReport> reports,
                       const EvalReport* baseline = nullptr);

}  // namespace weaverec
