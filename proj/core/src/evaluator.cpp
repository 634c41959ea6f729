// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/evaluator.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "weaverec/error.hpp"

namespace weaverec {

std::string_view metric_name(Metric metric) noexcept {
  switch (metric) {
    case Metric::kNdcg1:
      return "ndcg@1";
    case Metric::kNdcg3:
      return "ndcg@3";
    case Metric::kNdcg5:
      return "ndcg@5";
    case Metric::kMrr5:
      return "mrr@5";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : kAllMetrics) {
    if (metric_name(m) == name) {
      return m;
    }
  }
  throw ConfigError("unknown metric '" + std::string(name) +
                    "' (expected ndcg@1, ndcg@3, ndcg@5 or mrr@5)");
}

std::vector<EvalCase> make_eval_cases(const SplitDataset& split, EvalSide side,
                                      std::uint64_t candidate_seed, std::size_t negatives) {
  const auto root = RngStream(candidate_seed)
                        .split(split.domain_id)
                        .split(side == EvalSide::kValidation ? "valid" : "test");
  std::vector<EvalCase> cases;
  cases.reserve(split.users.size());
  for (const auto& user : split.users) {
    auto rng = root.split(user.user_id);
    const auto full = user.full_sequence();
    EvalCase c;
    c.user_id = user.user_id;
    const ItemId truth = side == EvalSide::kValidation ? user.valid_target : user.test_target;
    c.prefix = side == EvalSide::kValidation ? user.valid_prefix() : user.test_prefix();
    c.candidates = sample_candidates(user.user_id, full, truth, split.catalog, negatives, rng);
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<ItemId> rank_by_scores(std::span<const double> logits,
                                   std::span<const ItemId> candidates) {
  std::vector<ItemId> ranking(candidates.begin(), candidates.end());
  for (ItemId id : ranking) {
    if (id >= logits.size()) {
      throw EvalError("rank_by_scores: candidate " + std::to_string(id) +
                      " is outside the vocabulary");
    }
  }
  std::sort(ranking.begin(), ranking.end(), [&](ItemId a, ItemId b) {
    if (logits[a] != logits[b]) {
      return logits[a] > logits[b];
    }
    return a < b;
  });
  return ranking;
}

std::vector<ItemId> rank_candidates(const BaseModel& base, AdapterView adapter,
                                    std::span<const ItemId> prefix,
                                    const CandidateSet& candidates) {
  const auto recent = recent_items(prefix, base.dims.max_seq_len);
  const auto logits = forward(base, adapter, recent);
  const auto all = candidates.all();
  return rank_by_scores(logits, all);
}

std::size_t rank_of(std::span<const ItemId> ranking, ItemId ground_truth) {
  const auto it = std::find(ranking.begin(), ranking.end(), ground_truth);
  if (it == ranking.end()) {
    throw EvalError("ground truth item " + std::to_string(ground_truth) +
                    " is not in the ranking");
  }
  return static_cast<std::size_t>(it - ranking.begin()) + 1;
}

double ndcg_at_k(std::span<const ItemId> ranking, ItemId ground_truth, std::size_t k) {
  if (k == 0) {
    throw EvalError("ndcg_at_k: k must be at least 1");
  }
  const auto rank = rank_of(ranking, ground_truth);
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

double mrr_at_k(std::span<const ItemId> ranking, ItemId ground_truth, std::size_t k) {
  if (k == 0) {
    throw EvalError("mrr_at_k: k must be at least 1");
  }
  const auto rank = rank_of(ranking, ground_truth);
  return rank <= k ? 1.0 / static_cast<double>(rank) : 0.0;
}

double MetricSummary::get(Metric metric) const {
  switch (metric) {
    case Metric::kNdcg1:
      return ndcg1;
    case Metric::kNdcg3:
      return ndcg3;
    case Metric::kNdcg5:
      return ndcg5;
    case Metric::kMrr5:
      return mrr5;
  }
  return 0.0;
}

MetricSummary metrics_for_rank(std::size_t rank) {
  const auto ndcg = [rank](std::size_t k) {
    return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
  };
  MetricSummary m;
  m.ndcg1 = ndcg(1);
  m.ndcg3 = ndcg(3);
  m.ndcg5 = ndcg(5);
  m.mrr5 = rank <= 5 ? 1.0 / static_cast<double>(rank) : 0.0;
  return m;
}

namespace {

MetricSummary mean_of(std::span<const UserMetrics> users) {
  MetricSummary sum;
  for (const auto& u : users) {
    sum.ndcg1 += u.metrics.ndcg1;
    sum.ndcg3 += u.metrics.ndcg3;
    sum.ndcg5 += u.metrics.ndcg5;
    sum.mrr5 += u.metrics.mrr5;
  }
  if (users.empty()) {
    return sum;
  }
  const double n = static_cast<double>(users.size());
  return {sum.ndcg1 / n, sum.ndcg3 / n, sum.ndcg5 / n, sum.mrr5 / n};
}

}  // namespace

EvalReport evaluate(const BaseModel& base, AdapterView adapter, std::span<const EvalCase> cases,
                    std::string_view method, std::string_view domain_id,
                    std::uint64_t candidate_seed, std::uint64_t seed) {
  EvalReport report;
  report.method = method;
  report.domain_id = domain_id;
  report.seed = seed;
  report.candidate_seed = candidate_seed;
  report.users.reserve(cases.size());
  for (const auto& c : cases) {
    const auto ranking = rank_candidates(base, adapter, c.prefix, c.candidates);
    const auto rank = rank_of(ranking, c.candidates.ground_truth);
    report.users.push_back({c.user_id, metrics_for_rank(rank), rank});
  }
  report.aggregate = mean_of(report.users);
  return report;
}

EvalReport evaluate(const BaseModel& base, AdapterView adapter, const SplitDataset& split,
                    std::uint64_t candidate_seed, std::string_view method) {
  const auto cases = make_eval_cases(split, EvalSide::kTest, candidate_seed);
  return evaluate(base, adapter, cases, method, split.domain_id, candidate_seed);
}

double validation_mrr5(const BaseModel& base, AdapterView adapter,
                       std::span<const EvalCase> cases) {
  if (cases.empty()) {
    return 0.0;
  }
  double total = 0.0;
  for (const auto& c : cases) {
    const auto ranking = rank_candidates(base, adapter, c.prefix, c.candidates);
    total += mrr_at_k(ranking, c.candidates.ground_truth, 5);
  }
  return total / static_cast<double>(cases.size());
}

double paired_t_pvalue(std::span<const double> differences) {
  const std::size_t n = differences.size();
  if (n == 0) {
    throw EvalError("paired_t_pvalue: no paired observations");
  }
  const double mean =
      std::accumulate(differences.begin(), differences.end(), 0.0) / static_cast<double>(n);
  const bool all_zero =
      std::all_of(differences.begin(), differences.end(), [](double d) { return d == 0.0; });
  if (all_zero) {
    return 1.0;
  }
  double ss = 0.0;
  for (double d : differences) {
    ss += (d - mean) * (d - mean);
  }
  // Spread that is pure rounding noise relative to the mean counts as zero.
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  if (sd <= 1e-14 * std::abs(mean)) {
    return mean == 0.0 ? 1.0 : 0.0;
  }
  if (n < 2) {
    return 1.0;
  }
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double paired_significance(const EvalReport& a, const EvalReport& b, Metric metric) {
  if (a.users.size() != b.users.size()) {
    throw EvalError("paired_significance: reports cover different user sets (" +
                    std::to_string(a.users.size()) + " vs " + std::to_string(b.users.size()) +
                    " users)");
  }
  if (a.candidate_seed != b.candidate_seed) {
    throw EvalError("paired_significance: reports use different candidate seeds");
  }
  std::unordered_map<std::string_view, const UserMetrics*> by_user;
  for (const auto& u : b.users) {
    by_user.emplace(u.user_id, &u);
  }
  std::vector<double> diffs;
  diffs.reserve(a.users.size());
  for (const auto& u : a.users) {
    const auto it = by_user.find(u.user_id);
    if (it == by_user.end()) {
      throw EvalError("paired_significance: user " + u.user_id + " missing from second report");
    }
    diffs.push_back(u.metrics.get(metric) - it->second->metrics.get(metric));
  }
  return paired_t_pvalue(diffs);
}

MetricSummary transfer_gain(const EvalReport& merged, const EvalReport& target_only) {
  if (merged.domain_id != target_only.domain_id ||
      merged.candidate_seed != target_only.candidate_seed ||
      merged.users.size() != target_only.users.size()) {
    throw EvalError("transfer_gain: reports were produced under different settings");
  }
  const auto& m = merged.aggregate;
  const auto& t = target_only.aggregate;
  return {m.ndcg1 - t.ndcg1, m.ndcg3 - t.ndcg3, m.ndcg5 - t.ndcg5, m.mrr5 - t.mrr5};
}

namespace {

nlohmann::json summary_json(const MetricSummary& m) {
  return {{"ndcg@1", m.ndcg1}, {"ndcg@3", m.ndcg3}, {"ndcg@5", m.ndcg5}, {"mrr@5", m.mrr5}};
}

MetricSummary summary_from(const nlohmann::json& j) {
  return {j.at("ndcg@1").get<double>(), j.at("ndcg@3").get<double>(),
          j.at("ndcg@5").get<double>(), j.at("mrr@5").get<double>()};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::json users = nlohmann::json::array();
  for (const auto& u : report.users) {
    auto row = summary_json(u.metrics);
    row["user"] = u.user_id;
    row["rank"] = u.rank;
    users.push_back(std::move(row));
  }
  nlohmann::json j{{"method", report.method},
                   {"domain", report.domain_id},
                   {"seed", report.seed},
                   {"candidate_seed", report.candidate_seed},
                   {"aggregate", summary_json(report.aggregate)},
                   {"users", std::move(users)}};
  return j.dump(2);
}

EvalReport report_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport report;
    report.method = j.at("method").get<std::string>();
    report.domain_id = j.at("domain").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.candidate_seed = j.at("candidate_seed").get<std::uint64_t>();
    report.aggregate = summary_from(j.at("aggregate"));
    for (const auto& row : j.at("users")) {
      report.users.push_back(
          {row.at("user").get<std::string>(), summary_from(row), row.at("rank").get<std::size_t>()});
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw EvalError(std::string("malformed report JSON: ") + e.what());
  }
}

void write_summary_csv(std::ostream& out, std::span<const EvalReport> reports,
                       const EvalReport* baseline) {
  out << "method,domain,metric,mean,p_vs_baseline\n";
  for (const auto& r : reports) {
    for (Metric m : kAllMetrics) {
      out << r.method << ',' << r.domain_id << ',' << metric_name(m) << ','
          << std::setprecision(6) << std::fixed << r.aggregate.get(m) << ',';
      if (baseline != nullptr && baseline != &r && baseline->method != r.method) {
        out << std::setprecision(6) << std::scientific << paired_significance(r, *baseline, m);
      }
      out << std::defaultfloat << '\n';
    }
  }
}

}  // namespace weaverec
