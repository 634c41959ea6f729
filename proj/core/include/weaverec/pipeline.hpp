// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weaverec/analysis.hpp"
#include "weaverec/checkpoint.hpp"
#include "weaverec/config.hpp"
#include "weaverec/dataset.hpp"
#include "weaverec/evaluator.hpp"
#include "weaverec/merge.hpp"
#include "weaverec/model.hpp"
#include "weaverec/synthetic.hpp"
#include "weaverec/trainer.hpp"

namespace weaverec {

struct IngestSource {
  std::string domain_id;
  std::filesystem::path interactions;
  std::filesystem::path titles;
};

enum class PretrainCorpus {
  kGeneric,  // the synthetic generic domain
  kSlice,    // 80% of the users of every domain's training part
};

struct ExperimentConfig {
  bool synthetic = true;
  SyntheticConfig synth;
  std::vector<IngestSource> ingest;
  bool five_core = true;

  std::string target = "d0";
  std::vector<std::string> sources{"d1"};

  std::size_t dim = 32;
  std::size_t max_seq_len = 10;
  LoraConfig lora;
  TrainConfig pretrain;
  PretrainCorpus pretrain_corpus = PretrainCorpus::kGeneric;
  TrainConfig adapter;

  double mix_lambda = 1.0;
  MixMode mix_mode = MixMode::kFullUnion;

  /// Empty means uniform 1/(N+1), unless lambda_grid_search picks them.
  std::vector<double> lambdas;
  /// Choose WeaveRec's lambdas by validation MRR@5 over a simplex grid.
  bool lambda_grid_search = false;
  double lambda_grid_step = 0.1;
  double ties_trim = 0.2;
  double dare_drop = 0.5;
  std::size_t lego_rank = 0;
  std::size_t learn_steps = 30;
  double learn_step_size = 0.5;
  std::size_t unlabeled_prefixes = 50;

  std::uint64_t seed = 1;
  std::uint64_t candidate_seed = 7;
  std::filesystem::path output_dir = "weaverec-out";
};

/// Desk-scale defaults that every entry point starts from.
ExperimentConfig default_experiment_config();

/// Applies recognized keys on top of `base`; unknown keys are a ConfigError.
ExperimentConfig experiment_from_config(const ConfigMap& map,
                                        ExperimentConfig base = default_experiment_config());

/// Throws ConfigError on inconsistent settings (target among sources, ...).
void validate(const ExperimentConfig& config);

/// Canonical JSON of every field that influences results.
std::string experiment_to_json(const ExperimentConfig& config);

struct PreparedData {
  std::vector<SplitDataset> splits;           // every defined domain
  std::map<std::string, std::size_t> index;   // domain id -> splits position
  std::map<std::string, std::string> fingerprints;
  std::vector<TrainingExample> pretrain_corpus;
  std::string corpus_fingerprint;
  std::size_t vocab_size = 0;
  std::optional<SyntheticWorld> world;

  const SplitDataset& split(const std::string& domain) const;
};

PreparedData prepare_data(const ExperimentConfig& config);

/// Every next-item step of full sequences, prefixes truncated to max_prefix.
std::vector<TrainingExample> sequence_examples(const DomainDataset& dataset,
                                               std::size_t max_prefix);

struct ArtifactRecord {
  std::string role;   // base | target | hybrid | source | all-data | merged
  std::string label;  // e.g. hybrid/d1
  std::string path;   // relative to the output directory
  std::string sha256;
  std::string stage_key;
  bool reused = false;
  std::size_t parameter_count = 0;
};

struct ReportRecord {
  std::string method;
  std::string path;
  MetricSummary aggregate;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::vector<ArtifactRecord> artifacts;
  std::vector<ReportRecord> reports;
  std::string started_at;
  std::string finished_at;

  const ArtifactRecord* find(const std::string& label) const;
  const ReportRecord* report(const std::string& method) const;
  /// Adapters (not merges) produced by training during this run.
  std::size_t trained_adapters() const;
  std::string to_json() const;
};

/// Lazily materializes the artifacts of one experiment, reusing checkpoints in
/// the output directory whose stage key matches.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const PreparedData& data();

  const BaseModel& base();
  const LoraAdapter& initial_adapter();
  const LoraAdapter& target_adapter();
  const LoraAdapter& hybrid_adapter(const std::string& source);
  const LoraAdapter& source_adapter(const std::string& source);
  const LoraAdapter& all_data_adapter();

  std::span<const EvalCase> validation_cases(const std::string& domain);
  std::span<const EvalCase> target_test_cases();
  /// Test prefixes of a seeded subset of target users (labels unused).
  std::vector<std::vector<ItemId>> unlabeled_target_prefixes();

  /// Saves a merge result under checkpoints/merged__<name>.wvrc.
  void record_merge(const std::string& name, const CheckpointContent& content,
                    const MergeSpec& spec, std::span<const std::string> input_labels);
  /// Evaluates on the target test cases and writes reports/<method>.json.
  EvalReport evaluate_method(const std::string& method, AdapterView adapter);

  std::uint64_t stage_seed(const std::string& label) const;
  RunManifest& manifest() { return manifest_; }
  void write_manifest(const std::string& command);
  std::filesystem::path path_of(const std::string& relative) const;

 private:
  template <typename Fn>
  const LoraAdapter& adapter_stage(const std::string& role, const std::string& label,
                                   const std::string& key_json, Fn train);
  void add_artifact(ArtifactRecord record);
  std::string hash_of(const std::string& label) const;

  ExperimentConfig config_;
  std::optional<PreparedData> data_;
  std::optional<BaseModel> base_;
  std::optional<LoraAdapter> init_;
  std::map<std::string, LoraAdapter> adapters_;
  std::map<std::string, std::vector<EvalCase>> validation_;
  std::optional<std::vector<EvalCase>> test_cases_;
  RunManifest manifest_;
};

/// Stage 1 (instruction data), stage 2 (target and hybrid branches), stage 3
/// (factor merge) plus target-domain evaluation.
RunManifest run_weaverec(const ExperimentConfig& config);

/// Known names: target-only, all-data-merging, naive-wa, ties, dare+wa, lego,
/// learned-lambda, plus weaverec, hybrid and source-only for reference rows.
RunManifest run_baselines(const ExperimentConfig& config, std::span<const std::string> methods);

std::vector<std::string> default_baseline_methods();

/// Writes one JSONL file of rendered prompts per domain under
/// <output>/instructions and returns the paths.
std::vector<std::filesystem::path> write_instruction_datasets(Experiment& experiment,
                                                              std::size_t max_per_domain);

struct DivergenceOrdering {
  DivergenceEstimate mixed_vs_target;   // d(D_M, D_T)
  DivergenceEstimate source_vs_target;  // d(D_S, D_T)
  std::size_t sample_size = 0;

  bool ordered() const { return mixed_vs_target.d_hat < source_vs_target.d_hat; }
  std::string to_json() const;
};

/// Splits the target users in two disjoint halves: one is the D_T sample, the
/// other feeds the target side of the lambda-mixture D_M. Sequences are
/// featurized with the frozen base embeddings.
DivergenceOrdering divergence_ordering(Experiment& experiment, const std::string& source,
                                       double lambda, const ProbeConfig& probe = {});

/// Current UTC time as ISO-8601.
std::string utc_timestamp();

}  // namespace weaverec
