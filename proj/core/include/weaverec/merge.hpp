// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weaverec/model.hpp"
#include "weaverec/rng.hpp"

namespace weaverec {

/// Tolerance on |sum(lambda) - 1|.
inline constexpr double kLambdaSumTolerance = 1e-12;

enum class MergeMode { kFactor, kProduct };

enum class MergeMethod { kWeightAverage, kTies, kDareAverage, kLego, kLearned };

std::string_view merge_mode_name(MergeMode mode) noexcept;
std::string_view merge_method_name(MergeMethod method) noexcept;
MergeMethod parse_merge_method(std::string_view name);
MergeMode parse_merge_mode(std::string_view name);

struct MergeSpec {
  std::vector<double> lambdas;
  MergeMode mode = MergeMode::kFactor;
  MergeMethod method = MergeMethod::kWeightAverage;
  /// Ties: fraction of each delta's largest-magnitude coordinates kept.
  double trim_fraction = 0.2;
  /// DARE: per-coordinate drop probability.
  double drop_prob = 0.5;
  /// LEGO: output rank; 0 means "rank of the inputs".
  std::size_t lego_rank = 0;
  std::uint64_t seed = 0;
};

/// Throws MergeError unless all lambdas are finite and sum to 1.
void check_lambdas(std::span<const double> lambdas, std::size_t expected_count);

/// 1/n in every slot.
std::vector<double> uniform_lambdas(std::size_t n);

/// Factor-space average: B = sum lambda_i B_i and A = sum lambda_i A_i per
/// layer. Zero-weight inputs are skipped, so a one-hot lambda returns that
/// adapter bit for bit.
LoraAdapter weight_average(std::span<const LoraAdapter> adapters, std::span<const double> lambdas);

/// Product-space average: sum lambda_i * scale_i * B_i A_i per layer.
DenseDelta product_average(std::span<const LoraAdapter> adapters,
                           std::span<const double> lambdas);

/// alpha * hybrid + (1 - alpha) * target in factor space.
LoraAdapter pair_interpolate(const LoraAdapter& target, const LoraAdapter& hybrid, double alpha);

/// scale * B A per layer.
DenseDelta to_task_vector(const LoraAdapter& adapter);

/// sum w_i * delta_i with unconstrained (possibly negative) weights.
DenseDelta task_arithmetic(std::span<const DenseDelta> deltas, std::span<const double> weights);

DenseDelta ties_merge(std::span<const DenseDelta> deltas, double trim_fraction,
                      std::span<const double> lambdas);

DenseDelta dare(const DenseDelta& delta, double drop_prob, RngStream& rng);

/// Drops and rescales each task vector independently, then averages with
/// `lambdas`.
DenseDelta dare_average(std::span<const DenseDelta> deltas, double drop_prob,
                        std::span<const double> lambdas, const RngStream& rng);

/// Pools the rank-1 units of every adapter per layer, clusters them into k
/// groups and rebuilds a rank-k adapter from the cluster means.
LoraAdapter lego_merge(std::span<const LoraAdapter> adapters, std::size_t k, RngStream& rng);

struct LearnLambdasConfig {
  std::size_t steps = 30;
  double step_size = 0.5;
  double fd_epsilon = 1e-4;
  /// When non-empty, entropy is measured over these item ids only.
  std::vector<ItemId> restrict_to;
};

struct LearnedLambdas {
  std::vector<double> lambdas;
  double entropy = 0.0;
  double initial_entropy = 0.0;
  std::vector<double> entropy_trace;
};

/// Mean softmax entropy of the model's next-item distribution over `prefixes`.
double mean_prediction_entropy(const BaseModel& base, AdapterView adapter,
                               std::span<const std::vector<ItemId>> prefixes,
                               std::span<const ItemId> restrict_to = {});

/// Entropy-minimizing merge coefficients (finite-difference gradient, simplex
/// projection, best-seen iterate returned).
LearnedLambdas learn_lambdas(const BaseModel& base, std::span<const LoraAdapter> adapters,
                             std::span<const std::vector<ItemId>> prefixes,
                             const LearnLambdasConfig& config);

/// Every lambda vector of length n on the simplex grid with the given step.
std::vector<std::vector<double>> simplex_grid(std::size_t n, double resolution);

/// Canonical JSON object recording how a merged artifact was produced.
std::string merge_provenance_json(const MergeSpec& spec,
                                  std::span<const std::string> input_hashes,
                                  std::span<const std::string> input_labels);

}  // namespace weaverec
