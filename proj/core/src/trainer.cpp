// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/trainer.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "weaverec/error.hpp"

namespace weaverec {

std::string_view optimizer_name(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") {
    return OptimizerKind::kSgd;
  }
  if (name == "adam") {
    return OptimizerKind::kAdam;
  }
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

double default_learning_rate(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::kAdam ? 1e-3 : 1e-2;
}

void validate(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw ConfigError("learning rate must be a positive finite number");
  }
  if (config.batch_size == 0) {
    throw ConfigError("batch size must be at least 1");
  }
  if (config.patience == 0) {
    throw ConfigError("early-stop patience must be at least 1");
  }
}

std::string TrainReport::to_json() const {
  nlohmann::json j{{"train_loss", train_loss},
                   {"valid_mrr@5", valid_metric},
                   {"best_epoch", best_epoch},
                   {"steps", steps},
                   {"wall_seconds", wall_seconds},
                   {"early_stopped", early_stopped},
                   {"warnings", warnings},
                   {"adapter", adapter_ref}};
  return j.dump(2);
}

namespace {

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, std::size_t n) : kind_(kind), lr_(lr) {
    if (kind_ == OptimizerKind::kAdam) {
      m_.assign(n, 0.0);
      v_.assign(n, 0.0);
    }
  }

  void step(std::span<double> params, std::span<const double> grads) {
    if (kind_ == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr_ * grads[i];
      }
      return;
    }
    ++t_;
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

std::vector<Matrix*> base_tensors(BaseModel& model) {
  std::vector<Matrix*> out{&model.item_embeddings};
  for (auto& w : model.weights) {
    out.push_back(&w);
  }
  return out;
}

Vector flatten_base(BaseModel& model) {
  Vector flat;
  for (Matrix* m : base_tensors(model)) {
    flat.insert(flat.end(), m->data().begin(), m->data().end());
  }
  return flat;
}

void assign_base(BaseModel& model, std::span<const double> flat) {
  std::size_t pos = 0;
  for (Matrix* m : base_tensors(model)) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), m->size(), m->data().begin());
    pos += m->size();
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Shuffled minibatches of one epoch, materialized as contiguous copies.
std::vector<std::vector<TrainingExample>> epoch_batches(std::span<const TrainingExample> data,
                                                        std::size_t batch_size, RngStream rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<TrainingExample>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    auto& batch = batches.emplace_back();
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(data[order[i]]);
    }
  }
  return batches;
}

void check_step(double loss, std::span<const double> params, std::size_t epoch,
                std::size_t step, const char* what) {
  if (!std::isfinite(loss)) {
    throw TrainingError(std::string(what) + " diverged at epoch " + std::to_string(epoch) +
                        ", step " + std::to_string(step) + ": loss is " + std::to_string(loss));
  }
  for (double p : params) {
    if (!std::isfinite(p)) {
      throw TrainingError(std::string(what) + " diverged at epoch " + std::to_string(epoch) +
                          ", step " + std::to_string(step) +
                          ": parameters became non-finite (try a smaller learning rate)");
    }
  }
}

}  // namespace

PretrainResult pretrain_base(std::span<const TrainingExample> corpus, const ModelDims& dims,
                             const TrainConfig& config) {
  validate(config);
  if (corpus.empty()) {
    throw TrainingError("pretrain_base: empty pretraining corpus");
  }
  const auto start = std::chrono::steady_clock::now();
  const RngStream root(config.seed);
  auto init_rng = root.split("init");
  PretrainResult result{BaseModel::initialize(dims, init_rng), {}};
  auto& model = result.model;
  auto& report = result.report;

  report.train_loss.push_back(mean_nll(model, {}, corpus));
  auto flat = flatten_base(model);
  Optimizer opt(config.optimizer, config.learning_rate, flat.size());
  const auto shuffle_root = root.split("shuffle");
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (const auto& batch : epoch_batches(corpus, config.batch_size, shuffle_root.split(epoch))) {
      auto res = base_loss_and_grads(model, batch);
      const auto grads = flatten_base(res.grads);
      opt.step(flat, grads);
      check_step(res.loss, flat, epoch, report.steps, "pretraining");
      assign_base(model, flat);
      loss_sum += res.loss;
      ++n_batches;
      ++report.steps;
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(n_batches));
  }
  report.best_epoch = config.max_epochs;
  report.wall_seconds = seconds_since(start);
  return result;
}

AdapterResult train_adapter(const BaseModel& base, const LoraAdapter& initial,
                            std::span<const TrainingExample> trainset,
                            std::span<const EvalCase> validation, const TrainConfig& config) {
  validate(config);
  check_compatible(base, initial);
  if (trainset.empty()) {
    throw TrainingError("train_adapter: empty training set");
  }
  const auto start = std::chrono::steady_clock::now();
  AdapterResult result{initial, {}};
  auto& report = result.report;
  const bool has_validation = !validation.empty();
  if (!has_validation) {
    report.warnings.push_back("no validation cases; trained for a fixed " +
                              std::to_string(config.max_epochs) + " epochs");
  }

  LoraAdapter adapter = initial;
  report.train_loss.push_back(mean_nll(base, adapter, trainset));
  double best_metric = 0.0;
  if (has_validation) {
    best_metric = validation_mrr5(base, adapter, validation);
    report.valid_metric.push_back(best_metric);
  }

  const RngStream root(config.seed);
  const auto shuffle_root = root.split("shuffle");
  const auto dropout_root = root.split("dropout");
  auto flat = adapter.flatten();
  Optimizer opt(config.optimizer, config.learning_rate, flat.size());
  std::size_t epoch = 0;
  for (epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto dropout_rng = dropout_root.split(epoch);
    RngStream* dropout = config.use_dropout && adapter.dropout > 0.0 ? &dropout_rng : nullptr;
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (const auto& batch :
         epoch_batches(trainset, config.batch_size, shuffle_root.split(epoch))) {
      auto res = loss_and_grads(base, adapter, batch, dropout);
      const auto grads = res.grads.flatten();
      opt.step(flat, grads);
      check_step(res.loss, flat, epoch, report.steps, "adapter training");
      adapter.assign(flat);
      loss_sum += res.loss;
      ++n_batches;
      ++report.steps;
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(n_batches));
    if (!has_validation) {
      continue;
    }
    const double metric = validation_mrr5(base, adapter, validation);
    report.valid_metric.push_back(metric);
    if (metric > best_metric) {
      best_metric = metric;
      report.best_epoch = epoch;
      result.adapter = adapter;
    } else if (epoch - report.best_epoch >= config.patience) {
      report.early_stopped = true;
      break;
    }
  }
  if (!has_validation) {
    result.adapter = adapter;
    report.best_epoch = config.max_epochs;
  }
  report.wall_seconds = seconds_since(start);
  return result;
}

std::vector<TrainingExample> domain_examples(const SplitDataset& split, std::size_t max_prefix,
                                             std::size_t cap, const RngStream& rng) {
  auto cap_rng = rng.split("cap").split(split.domain_id);
  return cap_examples(training_examples(split, max_prefix), cap, cap_rng);
}

std::vector<TrainingExample> all_data_examples(std::span<const SplitDataset> splits,
                                               std::size_t max_prefix, std::size_t cap,
                                               const RngStream& rng) {
  std::vector<TrainingExample> all;
  for (const auto& split : splits) {
    auto part = domain_examples(split, max_prefix, cap, rng);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

AdapterResult train_all_data_merging(const BaseModel& base, const LoraAdapter& initial,
                                     std::span<const SplitDataset> splits,
                                     std::span<const EvalCase> validation,
                                     const TrainConfig& config) {
  const auto trainset =
      all_data_examples(splits, base.dims.max_seq_len, config.example_cap, RngStream(config.seed));
  return train_adapter(base, initial, trainset, validation, config);
}

}  // namespace weaverec
