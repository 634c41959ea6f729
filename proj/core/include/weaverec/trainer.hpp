// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weaverec/dataset.hpp"
#include "weaverec/evaluator.hpp"
#include "weaverec/model.hpp"

namespace weaverec {

enum class OptimizerKind { kSgd, kAdam };

std::string_view optimizer_name(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::uint64_t seed = 1;
  /// Maximum training examples drawn from each domain; 0 keeps everything.
  std::size_t example_cap = 0;
  /// Apply the adapter's LoRA dropout during training.
  bool use_dropout = true;
};

/// Throws ConfigError when a field is out of range.
void validate(const TrainConfig& config);

/// Learning rate the optimizer would conventionally use at desk scale.
double default_learning_rate(OptimizerKind kind) noexcept;

struct TrainReport {
  /// Index 0 is the untrained starting point; index e is after epoch e.
  std::vector<double> train_loss;
  /// Validation MRR@5 per epoch, same indexing. Empty for fixed-epoch runs.
  std::vector<double> valid_metric;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
  bool early_stopped = false;
  std::vector<std::string> warnings;
  /// Checkpoint path or hash of the returned weights, filled in by callers.
  std::string adapter_ref;

  std::string to_json() const;
};

struct PretrainResult {
  BaseModel model;
  TrainReport report;
};

/// Trains every base parameter on next-item NLL for `config.max_epochs`
/// epochs (no early stopping) and returns the model to be frozen.
PretrainResult pretrain_base(std::span<const TrainingExample> corpus, const ModelDims& dims,
                             const TrainConfig& config);

struct AdapterResult {
  LoraAdapter adapter;
  TrainReport report;
};

/// Fine-tunes `initial` with the base frozen. Early stopping tracks validation
/// MRR@5; with no validation cases the run lasts exactly max_epochs.
AdapterResult train_adapter(const BaseModel& base, const LoraAdapter& initial,
                            std::span<const TrainingExample> trainset,
                            std::span<const EvalCase> validation, const TrainConfig& config);

/// Per-domain training examples with the configured cap applied.
std::vector<TrainingExample> domain_examples(const SplitDataset& split, std::size_t max_prefix,
                                             std::size_t cap, const RngStream& rng);

/// Training set of the all-data-merging baseline: every domain's capped
/// examples concatenated in split order.
std::vector<TrainingExample> all_data_examples(std::span<const SplitDataset> splits,
                                               std::size_t max_prefix, std::size_t cap,
                                               const RngStream& rng);

AdapterResult train_all_data_merging(const BaseModel& base, const LoraAdapter& initial,
                                     std::span<const SplitDataset> splits,
                                     std::span<const EvalCase> validation,
                                     const TrainConfig& config);

}  // namespace weaverec
