// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <set>
#include <sstream>

#include "weaverec/error.hpp"
#include "weaverec/hash.hpp"
#include "weaverec/instruction.hpp"

namespace weaverec {

using nlohmann::json;

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.pretrain.optimizer = OptimizerKind::kAdam;
  c.pretrain.learning_rate = 3e-3;
  c.pretrain.batch_size = 64;
  c.pretrain.max_epochs = 8;
  c.adapter.optimizer = OptimizerKind::kSgd;
  c.adapter.learning_rate = default_learning_rate(OptimizerKind::kSgd);
  c.adapter.batch_size = 64;
  c.adapter.max_epochs = 50;
  c.adapter.patience = 5;
  return c;
}

namespace {

void apply_train_keys(const ConfigMap& map, const std::string& prefix, TrainConfig& t) {
  if (const auto opt = map.get(prefix + ".optimizer")) {
    t.optimizer = parse_optimizer(*opt);
    t.learning_rate = default_learning_rate(t.optimizer);
  }
  t.learning_rate = map.get_double(prefix + ".lr", t.learning_rate);
  t.batch_size = map.get_size(prefix + ".batch_size", t.batch_size);
  t.max_epochs = map.get_size(prefix + ".epochs", t.max_epochs);
  t.patience = map.get_size(prefix + ".patience", t.patience);
  t.example_cap = map.get_size(prefix + ".example_cap", t.example_cap);
  t.use_dropout = map.get_bool(prefix + ".dropout", t.use_dropout);
}

json train_json(const TrainConfig& t) {
  return {{"lr", t.learning_rate},          {"batch_size", t.batch_size},
          {"epochs", t.max_epochs},         {"patience", t.patience},
          {"optimizer", optimizer_name(t.optimizer)}, {"example_cap", t.example_cap},
          {"dropout", t.use_dropout}};
}

std::string sanitize(std::string name) {
  for (char& c : name) {
    if (c == '/') {
      c = '_';
    }
  }
  return name;
}

std::string join(std::span<const std::string> parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out += (i ? sep : "") + parts[i];
  }
  return out;
}

// Re-throws with a stage tag, keeping the error category so the command-line
// front end can still map it to an exit code.
template <typename Fallback, typename Fn>
decltype(auto) tagged(const std::string& stage, Fn&& fn) {
  const auto tag = [&](const std::exception& e) {
    const std::string what = e.what();
    return what.starts_with("[") ? what : "[" + stage + "] " + what;
  };
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const DataError& e) {
    throw DataError(tag(e));
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.kind(), tag(e));
  } catch (const TrainingError& e) {
    throw TrainingError(tag(e));
  } catch (const MergeError& e) {
    throw MergeError(tag(e));
  } catch (const EvalError& e) {
    throw EvalError(tag(e));
  } catch (const Error& e) {
    throw Fallback(tag(e));
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write " + tmp.string());
    }
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

std::string dataset_fingerprint(const DomainDataset& dataset) {
  std::ostringstream out;
  out << dataset.domain_id << '\n';
  export_interactions(dataset, out);
  export_titles(dataset, out);
  return sha256_hex(out.str());
}

std::string corpus_fingerprint(std::span<const TrainingExample> corpus) {
  std::ostringstream out;
  for (const auto& ex : corpus) {
    for (ItemId id : ex.prefix) {
      out << id << ' ';
    }
    out << "> " << ex.target << '\n';
  }
  return sha256_hex(out.str());
}

}  // namespace

ExperimentConfig experiment_from_config(const ConfigMap& map, ExperimentConfig c) {
  const auto data = map.get_string("data", c.synthetic ? "synthetic" : "ingest");
  if (data != "synthetic" && data != "ingest") {
    throw ConfigError("data must be 'synthetic' or 'ingest', got '" + data + "'");
  }
  c.synthetic = data == "synthetic";

  c.seed = map.get_u64("seed", c.seed);
  c.synth.seed = c.seed;
  auto& s = c.synth;
  s.n_domains = map.get_size("synthetic.n_domains", s.n_domains);
  s.users_per_domain = map.get_size("synthetic.users_per_domain", s.users_per_domain);
  s.items_per_domain = map.get_size("synthetic.items_per_domain", s.items_per_domain);
  s.latent_dim = map.get_size("synthetic.latent_dim", s.latent_dim);
  s.correlation = map.get_double("synthetic.correlation", s.correlation);
  s.min_length = map.get_size("synthetic.min_length", s.min_length);
  s.max_length = map.get_size("synthetic.max_length", s.max_length);
  s.affinity_scale = map.get_double("synthetic.affinity_scale", s.affinity_scale);
  s.taste_weight = map.get_double("synthetic.taste_weight", s.taste_weight);
  s.generic_users = map.get_size("synthetic.generic_users", s.generic_users);
  s.seed = map.get_u64("synthetic.seed", s.seed);

  if (const auto domains = map.get_list("ingest.domains"); !domains.empty()) {
    c.ingest.clear();
    for (const auto& d : domains) {
      IngestSource src;
      src.domain_id = d;
      const auto inter = map.get("ingest." + d + ".interactions");
      const auto titles = map.get("ingest." + d + ".titles");
      if (!inter || !titles) {
        throw ConfigError("ingest domain '" + d + "' needs ingest." + d +
                          ".interactions and ingest." + d + ".titles");
      }
      src.interactions = *inter;
      src.titles = *titles;
      c.ingest.push_back(std::move(src));
    }
  }
  c.five_core = map.get_bool("five_core", c.five_core);

  c.target = map.get_string("target", c.target);
  if (map.contains("sources")) {
    c.sources = map.get_list("sources");
  }

  c.dim = map.get_size("model.dim", c.dim);
  c.max_seq_len = map.get_size("model.max_seq_len", c.max_seq_len);
  c.lora.rank = map.get_size("lora.rank", c.lora.rank);
  c.lora.alpha = map.get_double("lora.alpha", c.lora.alpha);
  c.lora.dropout = map.get_double("lora.dropout", c.lora.dropout);
  c.lora.init_sigma = map.get_double("lora.init_sigma", c.lora.init_sigma);

  apply_train_keys(map, "pretrain", c.pretrain);
  const auto corpus = map.get_string("pretrain.corpus", c.pretrain_corpus == PretrainCorpus::kGeneric
                                                            ? "generic"
                                                            : "slice");
  if (corpus != "generic" && corpus != "slice") {
    throw ConfigError("pretrain.corpus must be 'generic' or 'slice', got '" + corpus + "'");
  }
  c.pretrain_corpus = corpus == "generic" ? PretrainCorpus::kGeneric : PretrainCorpus::kSlice;
  apply_train_keys(map, "train", c.adapter);

  c.mix_lambda = map.get_double("mix.lambda", c.mix_lambda);
  const auto mode = map.get_string("mix.mode", c.mix_mode == MixMode::kRatio ? "ratio" : "union");
  if (mode != "ratio" && mode != "union") {
    throw ConfigError("mix.mode must be 'ratio' or 'union', got '" + mode + "'");
  }
  c.mix_mode = mode == "ratio" ? MixMode::kRatio : MixMode::kFullUnion;

  if (map.contains("merge.lambdas")) {
    c.lambdas = map.get_doubles("merge.lambdas");
  }
  c.lambda_grid_search = map.get_bool("merge.grid_search", c.lambda_grid_search);
  c.lambda_grid_step = map.get_double("merge.grid_step", c.lambda_grid_step);
  c.ties_trim = map.get_double("merge.ties_trim", c.ties_trim);
  c.dare_drop = map.get_double("merge.dare_p", c.dare_drop);
  c.lego_rank = map.get_size("merge.lego_rank", c.lego_rank);
  c.learn_steps = map.get_size("merge.learn_steps", c.learn_steps);
  c.learn_step_size = map.get_double("merge.learn_step_size", c.learn_step_size);
  c.unlabeled_prefixes = map.get_size("merge.unlabeled", c.unlabeled_prefixes);

  c.candidate_seed = map.get_u64("candidate_seed", c.candidate_seed);
  c.output_dir = map.get_string("output_dir", c.output_dir.string());

  // Per-domain ingest keys are read above only for listed domains.
  std::vector<std::string> unknown;
  for (const auto& key : map.unused_keys()) {
    unknown.push_back(key);
  }
  if (!unknown.empty()) {
    throw ConfigError("unknown configuration key(s): " + join(unknown, ", "));
  }
  return c;
}

void validate(const ExperimentConfig& c) {
  if (std::find(c.sources.begin(), c.sources.end(), c.target) != c.sources.end()) {
    throw ConfigError("target domain '" + c.target + "' is also listed as a source");
  }
  std::set<std::string> seen;
  for (const auto& s : c.sources) {
    if (!seen.insert(s).second) {
      throw ConfigError("source domain '" + s + "' is listed twice");
    }
  }
  std::set<std::string> defined;
  if (c.synthetic) {
    for (std::size_t d = 0; d < c.synth.n_domains; ++d) {
      defined.insert(synthetic_domain_id(d));
    }
  } else {
    if (c.ingest.empty()) {
      throw ConfigError("data=ingest needs ingest.domains");
    }
    for (const auto& src : c.ingest) {
      defined.insert(src.domain_id);
    }
  }
  const auto require_defined = [&](const std::string& d) {
    if (!defined.contains(d)) {
      throw ConfigError("domain '" + d + "' is not defined by the data source");
    }
  };
  require_defined(c.target);
  for (const auto& s : c.sources) {
    require_defined(s);
  }
  if (c.dim == 0 || c.max_seq_len == 0) {
    throw ConfigError("model.dim and model.max_seq_len must be positive");
  }
  if (c.lora.rank == 0 || c.lora.rank >= c.dim) {
    throw ConfigError("lora.rank must lie in [1, model.dim)");
  }
  if (!(c.lora.alpha > 0.0)) {
    throw ConfigError("lora.alpha must be positive");
  }
  if (!(c.lora.dropout >= 0.0 && c.lora.dropout < 1.0)) {
    throw ConfigError("lora.dropout must lie in [0, 1)");
  }
  validate(c.pretrain);
  validate(c.adapter);
  if (!(c.mix_lambda >= 0.0)) {
    throw ConfigError("mix.lambda must be non-negative");
  }
  if (!c.lambdas.empty() && c.lambdas.size() != c.sources.size() + 1) {
    throw ConfigError("merge.lambdas needs " + std::to_string(c.sources.size() + 1) +
                      " values (target plus one per source)");
  }
  if (c.lambda_grid_search && !(c.lambda_grid_step > 0.0 && c.lambda_grid_step <= 1.0)) {
    throw ConfigError("merge.grid_step must lie in (0, 1]");
  }
}

std::string experiment_to_json(const ExperimentConfig& c) {
  json ingest = json::array();
  for (const auto& src : c.ingest) {
    ingest.push_back({{"domain", src.domain_id},
                      {"interactions", src.interactions.string()},
                      {"titles", src.titles.string()}});
  }
  const auto& s = c.synth;
  json j{
      {"data", c.synthetic ? "synthetic" : "ingest"},
      {"synthetic",
       {{"n_domains", s.n_domains},
        {"users_per_domain", s.users_per_domain},
        {"items_per_domain", s.items_per_domain},
        {"latent_dim", s.latent_dim},
        {"correlation", s.correlation},
        {"min_length", s.min_length},
        {"max_length", s.max_length},
        {"affinity_scale", s.affinity_scale},
        {"taste_weight", s.taste_weight},
        {"generic_users", s.generic_users},
        {"seed", s.seed}}},
      {"ingest", ingest},
      {"five_core", c.five_core},
      {"target", c.target},
      {"sources", c.sources},
      {"model", {{"dim", c.dim}, {"max_seq_len", c.max_seq_len}}},
      {"lora",
       {{"rank", c.lora.rank},
        {"alpha", c.lora.alpha},
        {"dropout", c.lora.dropout},
        {"init_sigma", c.lora.init_sigma}}},
      {"pretrain", train_json(c.pretrain)},
      {"pretrain_corpus", c.pretrain_corpus == PretrainCorpus::kGeneric ? "generic" : "slice"},
      {"train", train_json(c.adapter)},
      {"mix", {{"lambda", c.mix_lambda}, {"mode", c.mix_mode == MixMode::kRatio ? "ratio" : "union"}}},
      {"merge",
       {{"lambdas", c.lambdas},
        {"grid_search", c.lambda_grid_search},
        {"grid_step", c.lambda_grid_step},
        {"ties_trim", c.ties_trim},
        {"dare_p", c.dare_drop},
        {"lego_rank", c.lego_rank},
        {"learn_steps", c.learn_steps},
        {"learn_step_size", c.learn_step_size},
        {"unlabeled", c.unlabeled_prefixes}}},
      {"seed", c.seed},
      {"candidate_seed", c.candidate_seed}};
  return j.dump();
}

const SplitDataset& PreparedData::split(const std::string& domain) const {
  const auto it = index.find(domain);
  if (it == index.end()) {
    throw DataError("domain '" + domain + "' is not part of the prepared data");
  }
  return splits[it->second];
}

std::vector<TrainingExample> sequence_examples(const DomainDataset& dataset,
                                               std::size_t max_prefix) {
  std::vector<TrainingExample> out;
  for (const auto& user : dataset.users) {
    const auto items = user.items();
    for (std::size_t t = 1; t < items.size(); ++t) {
      const std::size_t begin = t > max_prefix ? t - max_prefix : 0;
      out.push_back({std::vector<ItemId>(items.begin() + static_cast<std::ptrdiff_t>(begin),
                                         items.begin() + static_cast<std::ptrdiff_t>(t)),
                     items[t], dataset.domain_id});
    }
  }
  return out;
}

PreparedData prepare_data(const ExperimentConfig& config) {
  validate(config);
  PreparedData prepared;
  std::vector<DomainDataset> domains;
  if (config.synthetic) {
    prepared.world = generate_synthetic(config.synth);
    domains = prepared.world->domains;
    prepared.vocab_size = prepared.world->vocab_size();
  } else {
    ItemRegistry registry;
    for (const auto& src : config.ingest) {
      domains.push_back(
          ingest_interactions(src.interactions, src.titles, src.domain_id, registry).dataset);
    }
    prepared.vocab_size = registry.size();
  }
  for (auto& d : domains) {
    if (config.five_core) {
      d = five_core_filter(d);
    }
    prepared.fingerprints[d.domain_id] = dataset_fingerprint(d);
    prepared.index[d.domain_id] = prepared.splits.size();
    prepared.splits.push_back(leave_one_out_split(d));
  }

  if (config.synthetic && config.pretrain_corpus == PretrainCorpus::kGeneric) {
    prepared.pretrain_corpus = sequence_examples(prepared.world->generic, config.max_seq_len);
  } else {
    // 80% of each domain's users, training part only.
    const RngStream root = RngStream(config.seed).split("pretrain-slice");
    for (const auto& split : prepared.splits) {
      auto rng = root.split(split.domain_id);
      SplitDataset slice{split.domain_id, {}, split.catalog};
      for (const auto& user : split.users) {
        if (rng.uniform() < 0.8) {
          slice.users.push_back(user);
        }
      }
      auto part = training_examples(slice, config.max_seq_len);
      prepared.pretrain_corpus.insert(prepared.pretrain_corpus.end(), part.begin(), part.end());
    }
  }
  if (prepared.pretrain_corpus.empty()) {
    throw DataError("pretraining corpus is empty");
  }
  prepared.corpus_fingerprint = corpus_fingerprint(prepared.pretrain_corpus);
  return prepared;
}

const ArtifactRecord* RunManifest::find(const std::string& label) const {
  for (const auto& a : artifacts) {
    if (a.label == label) {
      return &a;
    }
  }
  return nullptr;
}

const ReportRecord* RunManifest::report(const std::string& method) const {
  for (const auto& r : reports) {
    if (r.method == method) {
      return &r;
    }
  }
  return nullptr;
}

std::size_t RunManifest::trained_adapters() const {
  return static_cast<std::size_t>(std::count_if(artifacts.begin(), artifacts.end(), [](const auto& a) {
    return a.role != "merged" && a.role != "base" && !a.reused;
  }));
}

std::string RunManifest::to_json() const {
  json arts = json::array();
  for (const auto& a : artifacts) {
    arts.push_back({{"role", a.role},
                    {"label", a.label},
                    {"path", a.path},
                    {"sha256", a.sha256},
                    {"stage_key", a.stage_key},
                    {"reused", a.reused},
                    {"parameters", a.parameter_count}});
  }
  json reps = json::array();
  for (const auto& r : reports) {
    reps.push_back({{"method", r.method},
                    {"path", r.path},
                    {"aggregate",
                     {{"ndcg@1", r.aggregate.ndcg1},
                      {"ndcg@3", r.aggregate.ndcg3},
                      {"ndcg@5", r.aggregate.ndcg5},
                      {"mrr@5", r.aggregate.mrr5}}}});
  }
  json j{{"schema", 1},
         {"command", command},
         {"config_hash", config_hash},
         {"artifacts", arts},
         {"reports", reps},
         {"started_at", started_at},
         {"finished_at", finished_at}};
  return j.dump(2);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  validate(config_);
  manifest_.config_hash = sha256_hex(experiment_to_json(config_));
  manifest_.started_at = utc_timestamp();
}

std::filesystem::path Experiment::path_of(const std::string& relative) const {
  return config_.output_dir / relative;
}

std::uint64_t Experiment::stage_seed(const std::string& label) const {
  return RngStream(config_.seed).split("stage").split(label).key();
}

const PreparedData& Experiment::data() {
  if (!data_) {
    data_ = tagged<DataError>("data", [&] { return prepare_data(config_); });
  }
  return *data_;
}

void Experiment::add_artifact(ArtifactRecord record) {
  for (auto& a : manifest_.artifacts) {
    if (a.label == record.label) {
      a = std::move(record);
      return;
    }
  }
  manifest_.artifacts.push_back(std::move(record));
}

std::string Experiment::hash_of(const std::string& label) const {
  const auto* rec = manifest_.find(label);
  if (rec == nullptr) {
    throw Error("internal: artifact " + label + " has not been produced");
  }
  return rec->sha256;
}

const BaseModel& Experiment::base() {
  if (base_) {
    return *base_;
  }
  const auto& prepared = data();
  const ModelDims dims{prepared.vocab_size, config_.dim, config_.max_seq_len};
  TrainConfig cfg = config_.pretrain;
  cfg.seed = stage_seed("base");
  const json key_json{{"stage", "base"},
                      {"corpus", prepared.corpus_fingerprint},
                      {"dims", {dims.vocab_size, dims.dim, dims.max_seq_len}},
                      {"train", train_json(cfg)},
                      {"seed", cfg.seed}};
  const auto key = sha256_hex(key_json.dump());
  const std::string rel = "checkpoints/base.wvrc";
  const auto path = path_of(rel);
  bool reused = false;
  if (std::filesystem::exists(path)) {
    auto ckpt = load_checkpoint(path);
    if (ckpt.metadata.attributes["stage_key"] == key && std::holds_alternative<BaseModel>(ckpt.content)) {
      base_ = std::get<BaseModel>(std::move(ckpt.content));
      reused = true;
    }
  }
  if (!base_) {
    auto result = tagged<TrainingError>("pretrain", [&] {
      return pretrain_base(prepared.pretrain_corpus, dims, cfg);
    });
    CheckpointMetadata meta;
    meta.lineage = {config_.synthetic && config_.pretrain_corpus == PretrainCorpus::kGeneric
                        ? std::string(kGenericDomainId)
                        : std::string("slice")};
    meta.training_seed = cfg.seed;
    meta.attributes = {{"stage_key", key}, {"role", "base"}, {"label", "base"}};
    save_checkpoint(path, result.model, meta);
    result.report.adapter_ref = rel;
    write_text(path_of("reports/train-base.json"), result.report.to_json());
    base_ = std::move(result.model);
  }
  add_artifact({"base", "base", rel, sha256_file(path), key, reused, base_->parameter_count()});
  return *base_;
}

const LoraAdapter& Experiment::initial_adapter() {
  if (!init_) {
    auto rng = RngStream(stage_seed("lora-init"));
    init_ = init_adapter(base(), config_.lora, rng);
  }
  return *init_;
}

std::span<const EvalCase> Experiment::validation_cases(const std::string& domain) {
  auto it = validation_.find(domain);
  if (it == validation_.end()) {
    auto cases = tagged<DataError>("candidates", [&] {
      return make_eval_cases(data().split(domain), EvalSide::kValidation, config_.candidate_seed);
    });
    it = validation_.emplace(domain, std::move(cases)).first;
  }
  return it->second;
}

std::span<const EvalCase> Experiment::target_test_cases() {
  if (!test_cases_) {
    test_cases_ = tagged<DataError>("candidates", [&] {
      return make_eval_cases(data().split(config_.target), EvalSide::kTest,
                             config_.candidate_seed);
    });
  }
  return *test_cases_;
}

std::vector<std::vector<ItemId>> Experiment::unlabeled_target_prefixes() {
  const auto& split = data().split(config_.target);
  std::vector<std::size_t> order(split.users.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  auto rng = RngStream(stage_seed("unlabeled"));
  rng.shuffle(order);
  order.resize(std::min(order.size(), config_.unlabeled_prefixes));
  std::vector<std::vector<ItemId>> prefixes;
  for (std::size_t i : order) {
    prefixes.push_back(split.users[i].test_prefix());
  }
  return prefixes;
}

template <typename Fn>
const LoraAdapter& Experiment::adapter_stage(const std::string& role, const std::string& label,
                                             const std::string& key_json, Fn train) {
  if (const auto it = adapters_.find(label); it != adapters_.end()) {
    return it->second;
  }
  const auto& base_model = base();
  const auto& init = initial_adapter();
  const json key_parts{{"stage", key_json},
                       {"base", hash_of("base")},
                       {"lora",
                        {{"rank", config_.lora.rank},
                         {"alpha", config_.lora.alpha},
                         {"dropout", config_.lora.dropout},
                         {"init_sigma", config_.lora.init_sigma},
                         {"init_seed", stage_seed("lora-init")}}},
                       {"train", train_json(config_.adapter)},
                       {"seed", stage_seed(label)},
                       {"candidate_seed", config_.candidate_seed}};
  const auto key = sha256_hex(key_parts.dump());
  const auto file = json::parse(key_json).at("file").get<std::string>();
  const std::string rel = "checkpoints/" + file + ".wvrc";
  const auto path = path_of(rel);

  std::optional<LoraAdapter> adapter;
  bool reused = false;
  if (std::filesystem::exists(path)) {
    auto ckpt = load_checkpoint(path);
    if (ckpt.metadata.attributes["stage_key"] == key &&
        std::holds_alternative<LoraAdapter>(ckpt.content)) {
      adapter = std::get<LoraAdapter>(std::move(ckpt.content));
      reused = true;
    }
  }
  if (!adapter) {
    TrainConfig cfg = config_.adapter;
    cfg.seed = stage_seed(label);
    auto [lineage, result] = tagged<TrainingError>("train " + label, [&] {
      return train(base_model, init, cfg);
    });
    CheckpointMetadata meta;
    meta.lineage = lineage;
    meta.training_seed = cfg.seed;
    meta.attributes = {{"stage_key", key}, {"role", role}, {"label", label}};
    save_checkpoint(path, result.adapter, meta);
    result.report.adapter_ref = rel;
    write_text(path_of("reports/train-" + sanitize(label) + ".json"), result.report.to_json());
    adapter = std::move(result.adapter);
  }
  add_artifact({role, label, rel, sha256_file(path), key, reused, adapter->parameter_count()});
  return adapters_.emplace(label, std::move(*adapter)).first->second;
}

namespace {

std::vector<TrainingExample> branch_examples(const PreparedData& data, const std::string& domain,
                                             const ExperimentConfig& config) {
  return domain_examples(data.split(domain), config.max_seq_len, config.adapter.example_cap,
                         RngStream(config.seed).split("data"));
}

}  // namespace

const LoraAdapter& Experiment::target_adapter() {
  const auto& prepared = data();
  const std::string& t = config_.target;
  const json key{{"file", "target__" + t}, {"role", "target"}, {"train", {prepared.fingerprints.at(t)}},
                 {"valid", prepared.fingerprints.at(t)}};
  return adapter_stage("target", "target", key.dump(), [&](const BaseModel& b, const LoraAdapter& init,
                                                          const TrainConfig& cfg) {
    const auto examples = branch_examples(prepared, t, config_);
    return std::pair{std::vector<std::string>{t},
                     train_adapter(b, init, examples, validation_cases(t), cfg)};
  });
}

const LoraAdapter& Experiment::hybrid_adapter(const std::string& source) {
  const auto& prepared = data();
  const std::string& t = config_.target;
  const json key{{"file", "hybrid__" + t + "+" + source},
                 {"role", "hybrid"},
                 {"train", {prepared.fingerprints.at(t), prepared.split(source).domain_id,
                            prepared.fingerprints.at(source)}},
                 {"valid", prepared.fingerprints.at(t)},
                 {"mix", {config_.mix_lambda, config_.mix_mode == MixMode::kRatio ? "ratio" : "union"}}};
  const std::string label = "hybrid/" + source;
  return adapter_stage("hybrid", label, key.dump(), [&](const BaseModel& b, const LoraAdapter& init,
                                                       const TrainConfig& cfg) {
    const auto target_ex = branch_examples(prepared, t, config_);
    const auto source_ex = branch_examples(prepared, source, config_);
    auto mix_rng = RngStream(cfg.seed).split("mix");
    const auto examples =
        mix_domains(target_ex, source_ex, config_.mix_lambda, mix_rng, config_.mix_mode);
    return std::pair{std::vector<std::string>{t, source},
                     train_adapter(b, init, examples, validation_cases(t), cfg)};
  });
}

const LoraAdapter& Experiment::source_adapter(const std::string& source) {
  const auto& prepared = data();
  const json key{{"file", "source__" + source}, {"role", "source"},
                 {"train", {prepared.fingerprints.at(source)}},
                 {"valid", prepared.fingerprints.at(source)}};
  return adapter_stage("source", "source/" + source, key.dump(),
                       [&](const BaseModel& b, const LoraAdapter& init, const TrainConfig& cfg) {
                         const auto examples = branch_examples(prepared, source, config_);
                         return std::pair{std::vector<std::string>{source},
                                          train_adapter(b, init, examples,
                                                        validation_cases(source), cfg)};
                       });
}

const LoraAdapter& Experiment::all_data_adapter() {
  const auto& prepared = data();
  std::vector<std::string> domains{config_.target};
  domains.insert(domains.end(), config_.sources.begin(), config_.sources.end());
  json fps = json::array();
  for (const auto& d : domains) {
    fps.push_back(prepared.fingerprints.at(d));
  }
  const json key{{"file", "all-data__" + join(domains, "+")}, {"role", "all-data"},
                 {"train", fps}, {"valid", prepared.fingerprints.at(config_.target)}};
  return adapter_stage("all-data", "all-data", key.dump(),
                       [&](const BaseModel& b, const LoraAdapter& init, const TrainConfig& cfg) {
                         std::vector<TrainingExample> examples;
                         for (const auto& d : domains) {
                           auto part = branch_examples(prepared, d, config_);
                           examples.insert(examples.end(), part.begin(), part.end());
                         }
                         return std::pair{domains, train_adapter(b, init, examples,
                                                                 validation_cases(config_.target),
                                                                 cfg)};
                       });
}

void Experiment::record_merge(const std::string& name, const CheckpointContent& content,
                              const MergeSpec& spec, std::span<const std::string> input_labels) {
  std::vector<std::string> hashes;
  for (const auto& label : input_labels) {
    hashes.push_back(hash_of(label));
  }
  CheckpointMetadata meta;
  meta.training_seed = spec.seed;
  meta.provenance_json = merge_provenance_json(spec, hashes, input_labels);
  meta.lineage.assign(input_labels.begin(), input_labels.end());
  meta.attributes = {{"stage_key", sha256_hex(meta.provenance_json)},
                     {"role", "merged"},
                     {"label", "merged/" + name}};
  const std::string rel = "checkpoints/merged__" + name + ".wvrc";
  save_checkpoint(path_of(rel), content, meta);
  const std::size_t params = std::visit([](const auto& c) { return c.parameter_count(); }, content);
  add_artifact({"merged", "merged/" + name, rel, sha256_file(path_of(rel)),
                meta.attributes["stage_key"], false, params});
}

EvalReport Experiment::evaluate_method(const std::string& method, AdapterView adapter) {
  auto report = tagged<EvalError>("evaluate " + method, [&] {
    return evaluate(base(), adapter, target_test_cases(), method, config_.target,
                    config_.candidate_seed, config_.seed);
  });
  const std::string rel = "reports/" + sanitize(method) + ".json";
  write_text(path_of(rel), report_to_json(report));
  auto& reports = manifest_.reports;
  const auto it = std::find_if(reports.begin(), reports.end(),
                               [&](const ReportRecord& r) { return r.method == method; });
  if (it != reports.end()) {
    *it = {method, rel, report.aggregate};
  } else {
    reports.push_back({method, rel, report.aggregate});
  }
  return report;
}

void Experiment::write_manifest(const std::string& command) {
  manifest_.command = command;
  manifest_.finished_at = utc_timestamp();
  write_text(path_of("manifest.json"), manifest_.to_json());
}

std::vector<std::filesystem::path> write_instruction_datasets(Experiment& experiment,
                                                              std::size_t max_per_domain) {
  const auto& config = experiment.config();
  const auto& prepared = experiment.data();
  std::vector<std::string> domains{config.target};
  domains.insert(domains.end(), config.sources.begin(), config.sources.end());
  std::vector<std::filesystem::path> paths;
  for (const auto& d : domains) {
    const auto& split = prepared.split(d);
    auto examples = branch_examples(prepared, d, config);
    if (max_per_domain != 0 && examples.size() > max_per_domain) {
      examples.resize(max_per_domain);
    }
    auto rng = RngStream(experiment.stage_seed("instructions")).split(d);
    std::ostringstream out;
    std::size_t i = 0;
    for (const auto& ex : examples) {
      auto ex_rng = rng.split(i);
      const auto candidates = sample_candidates(d + " training example " + std::to_string(i++), ex.prefix, ex.target, split.catalog,
                                                kDefaultNegatives, ex_rng);
      out << to_jsonl_line(render_instruction(ex.prefix, candidates, split.catalog,
                                              default_instruction_template(), d))
          << '\n';
    }
    const auto path = experiment.path_of("instructions/" + d + ".jsonl");
    write_text(path, out.str());
    paths.push_back(path);
  }
  return paths;
}

namespace {

std::vector<std::string> weaverec_inputs(const ExperimentConfig& c) {
  std::vector<std::string> labels{"target"};
  for (const auto& s : c.sources) {
    labels.push_back("hybrid/" + s);
  }
  return labels;
}

std::string composition(const ExperimentConfig& c) {
  std::vector<std::string> parts{c.target};
  parts.insert(parts.end(), c.sources.begin(), c.sources.end());
  return join(parts, "+");
}

std::vector<double> merge_lambdas(const ExperimentConfig& c) {
  return c.lambdas.empty() ? uniform_lambdas(c.sources.size() + 1) : c.lambdas;
}

void write_table(Experiment& exp, const std::string& name, std::span<const EvalReport> reports) {
  const EvalReport* baseline = nullptr;
  for (const auto& r : reports) {
    if (r.method == "target-only") {
      baseline = &r;
    }
  }
  std::ostringstream out;
  write_summary_csv(out, reports, baseline);
  write_text(exp.path_of("tables/" + name + ".csv"), out.str());
}

// First grid point with the highest validation MRR@5; the whole grid is
// written to tables/lambda-grid.csv.
std::vector<double> grid_search_lambdas(Experiment& exp, std::span<const LoraAdapter> branches) {
  const auto grid = simplex_grid(branches.size(), exp.config().lambda_grid_step);
  const auto cases = exp.validation_cases(exp.config().target);
  std::ostringstream csv;
  csv << "lambdas,valid_mrr5\n" << std::setprecision(6);
  std::vector<double> best;
  double best_score = -1.0;
  for (const auto& lambdas : grid) {
    const double score = validation_mrr5(exp.base(), weight_average(branches, lambdas), cases);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      csv << (i > 0 ? ";" : "") << lambdas[i];
    }
    csv << ',' << score << '\n';
    if (score > best_score) {
      best_score = score;
      best = lambdas;
    }
  }
  write_text(exp.path_of("tables/lambda-grid.csv"), csv.str());
  return best;
}

EvalReport weaverec_stage(Experiment& exp) {
  const auto& c = exp.config();
  std::vector<LoraAdapter> branches{exp.target_adapter()};
  for (const auto& s : c.sources) {
    branches.push_back(exp.hybrid_adapter(s));
  }
  MergeSpec spec;
  spec.lambdas = merge_lambdas(c);
  if (c.lambda_grid_search && c.lambdas.empty()) {
    spec.lambdas = tagged<MergeError>("lambda grid search", [&] {
      return grid_search_lambdas(exp, branches);
    });
  }
  const auto merged = tagged<MergeError>("merge", [&] { return weight_average(branches, spec.lambdas); });
  const auto labels = weaverec_inputs(c);
  exp.record_merge(composition(c), merged, spec, labels);
  return exp.evaluate_method("weaverec", merged);
}

}  // namespace

RunManifest run_weaverec(const ExperimentConfig& config) {
  Experiment exp(config);
  exp.data();
  write_instruction_datasets(exp, 1000);
  std::vector<EvalReport> reports;
  reports.push_back(exp.evaluate_method("target-only", exp.target_adapter()));
  for (const auto& s : config.sources) {
    reports.push_back(exp.evaluate_method("hybrid/" + s, exp.hybrid_adapter(s)));
  }
  reports.push_back(weaverec_stage(exp));
  write_table(exp, "weaverec", reports);
  exp.write_manifest("weaverec");
  return exp.manifest();
}

std::vector<std::string> default_baseline_methods() {
  return {"target-only", "all-data-merging", "naive-wa", "ties",
          "dare+wa",     "lego",             "learned-lambda"};
}

RunManifest run_baselines(const ExperimentConfig& config, std::span<const std::string> methods) {
  Experiment exp(config);
  exp.data();
  const auto per_domain = [&] {
    std::vector<LoraAdapter> adapters{exp.target_adapter()};
    std::vector<std::string> labels{"target"};
    for (const auto& s : config.sources) {
      adapters.push_back(exp.source_adapter(s));
      labels.push_back("source/" + s);
    }
    return std::pair{adapters, labels};
  };
  const auto task_vectors = [](std::span<const LoraAdapter> adapters) {
    std::vector<DenseDelta> out;
    for (const auto& a : adapters) {
      out.push_back(to_task_vector(a));
    }
    return out;
  };
  const std::string comp = composition(config);

  std::vector<EvalReport> reports;
  for (const auto& method : methods) {
    if (method == "target-only") {
      reports.push_back(exp.evaluate_method(method, exp.target_adapter()));
    } else if (method == "weaverec") {
      reports.push_back(weaverec_stage(exp));
    } else if (method == "hybrid") {
      for (const auto& s : config.sources) {
        reports.push_back(exp.evaluate_method("hybrid/" + s, exp.hybrid_adapter(s)));
      }
    } else if (method == "source-only") {
      for (const auto& s : config.sources) {
        reports.push_back(exp.evaluate_method("source-only/" + s, exp.source_adapter(s)));
      }
    } else if (method == "all-data-merging") {
      reports.push_back(exp.evaluate_method(method, exp.all_data_adapter()));
    } else if (method == "naive-wa") {
      const auto [adapters, labels] = per_domain();
      MergeSpec spec;
      spec.lambdas = uniform_lambdas(adapters.size());
      const auto merged =
          tagged<MergeError>("merge naive-wa", [&] { return weight_average(adapters, spec.lambdas); });
      exp.record_merge("naive-wa__" + comp, merged, spec, labels);
      reports.push_back(exp.evaluate_method(method, merged));
    } else if (method == "ties") {
      const auto [adapters, labels] = per_domain();
      MergeSpec spec;
      spec.method = MergeMethod::kTies;
      spec.mode = MergeMode::kProduct;
      spec.lambdas = uniform_lambdas(adapters.size());
      spec.trim_fraction = config.ties_trim;
      const auto merged = tagged<MergeError>("merge ties", [&] {
        return ties_merge(task_vectors(adapters), spec.trim_fraction, spec.lambdas);
      });
      exp.record_merge("ties__" + comp, merged, spec, labels);
      reports.push_back(exp.evaluate_method(method, merged));
    } else if (method == "dare+wa") {
      const auto [adapters, labels] = per_domain();
      MergeSpec spec;
      spec.method = MergeMethod::kDareAverage;
      spec.mode = MergeMode::kProduct;
      spec.lambdas = uniform_lambdas(adapters.size());
      spec.drop_prob = config.dare_drop;
      spec.seed = exp.stage_seed("dare");
      const auto merged = tagged<MergeError>("merge dare+wa", [&] {
        return dare_average(task_vectors(adapters), spec.drop_prob, spec.lambdas,
                            RngStream(spec.seed));
      });
      exp.record_merge("dare+wa__" + comp, merged, spec, labels);
      reports.push_back(exp.evaluate_method(method, merged));
    } else if (method == "lego") {
      const auto [adapters, labels] = per_domain();
      MergeSpec spec;
      spec.method = MergeMethod::kLego;
      spec.lego_rank = config.lego_rank == 0 ? config.lora.rank : config.lego_rank;
      spec.seed = exp.stage_seed("lego");
      const auto merged = tagged<MergeError>("merge lego", [&] {
        auto rng = RngStream(spec.seed);
        return lego_merge(adapters, spec.lego_rank, rng);
      });
      exp.record_merge("lego__" + comp, merged, spec, labels);
      reports.push_back(exp.evaluate_method(method, merged));
    } else if (method == "learned-lambda") {
      const auto [adapters, labels] = per_domain();
      LearnLambdasConfig lcfg;
      lcfg.steps = config.learn_steps;
      lcfg.step_size = config.learn_step_size;
      for (const auto& [id, entry] : exp.data().split(config.target).catalog) {
        lcfg.restrict_to.push_back(id);
      }
      const auto prefixes = exp.unlabeled_target_prefixes();
      const auto learned = tagged<MergeError>("learn lambdas", [&] {
        return learn_lambdas(exp.base(), adapters, prefixes, lcfg);
      });
      MergeSpec spec;
      spec.method = MergeMethod::kLearned;
      spec.lambdas = learned.lambdas;
      const auto merged =
          tagged<MergeError>("merge learned", [&] { return weight_average(adapters, spec.lambdas); });
      exp.record_merge("learned__" + comp, merged, spec, labels);
      reports.push_back(exp.evaluate_method(method, merged));
    } else {
      throw ConfigError("unknown baseline method '" + method + "'");
    }
  }
  write_table(exp, "baselines", reports);
  exp.write_manifest("baselines");
  return exp.manifest();
}

std::string DivergenceOrdering::to_json() const {
  const json j{{"sample_size", sample_size},
               {"ordered", ordered()},
               {"mixed_vs_target", json::parse(mixed_vs_target.to_json())},
               {"source_vs_target", json::parse(source_vs_target.to_json())}};
  return j.dump(2);
}

DivergenceOrdering divergence_ordering(Experiment& experiment, const std::string& source,
                                       double lambda, const ProbeConfig& probe) {
  const auto& config = experiment.config();
  const auto& target_split = experiment.data().split(config.target);
  const auto& source_split = experiment.data().split(source);
  const AffinityFeaturizer featurize(experiment.base());
  const RngStream root(experiment.stage_seed("hdiv/" + source));

  auto order_rng = root.split("order");
  std::vector<std::size_t> t_order(target_split.users.size());
  std::vector<std::size_t> s_order(source_split.users.size());
  for (std::size_t i = 0; i < t_order.size(); ++i) {
    t_order[i] = i;
  }
  for (std::size_t i = 0; i < s_order.size(); ++i) {
    s_order[i] = i;
  }
  order_rng.shuffle(t_order);
  order_rng.shuffle(s_order);

  const std::size_t half = t_order.size() / 2;
  const std::size_t n = std::min(half, s_order.size());
  if (n < kMinDivergenceSamples) {
    throw DataError("hdiv: need at least " + std::to_string(2 * kMinDivergenceSamples) +
                    " target users");
  }
  const auto features = [&](const SplitDataset& split, std::size_t user) {
    return featurize(split.users[user].full_sequence());
  };

  std::vector<Vector> target_sample;
  std::vector<Vector> source_sample;
  for (std::size_t i = 0; i < n; ++i) {
    target_sample.push_back(features(target_split, t_order[i]));
    source_sample.push_back(features(source_split, s_order[i]));
  }
  // Mixture draws consume fresh users from each pool so no sequence repeats.
  auto mix_rng = root.split("mixture");
  const auto draws = mixture_sample(half, s_order.size(), lambda, n, mix_rng);
  std::vector<Vector> mixed_sample;
  std::size_t next_t = half;
  std::size_t next_s = 0;
  for (const auto& d : draws) {
    if (d.from_source) {
      mixed_sample.push_back(features(source_split, s_order[next_s++ % s_order.size()]));
    } else {
      mixed_sample.push_back(features(target_split, t_order[next_t++]));
    }
  }

  DivergenceOrdering out;
  out.sample_size = n;
  auto probe_m = root.split("probe-mixed");
  out.mixed_vs_target = estimate_h_divergence(mixed_sample, target_sample, probe, probe_m);
  out.mixed_vs_target.first = "mixture(" + config.target + "," + source + ")";
  out.mixed_vs_target.second = config.target;
  auto probe_s = root.split("probe-source");
  out.source_vs_target = estimate_h_divergence(source_sample, target_sample, probe, probe_s);
  out.source_vs_target.first = source;
  out.source_vs_target.second = config.target;
  return out;
}

}  // namespace weaverec
