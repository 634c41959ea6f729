// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

// weaverec: command-line front end for the WeaveRec lab.
//
// Every subcommand reads the same flat configuration. A key=value file given
// with --config supplies defaults and command-line flags override it.

#include <CLI11.hpp>
#include <json.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "weaverec/analysis.hpp"
#include "weaverec/checkpoint.hpp"
#include "weaverec/config.hpp"
#include "weaverec/error.hpp"
#include "weaverec/evaluator.hpp"
#include "weaverec/hash.hpp"
#include "weaverec/instruction.hpp"
#include "weaverec/merge.hpp"
#include "weaverec/pipeline.hpp"
#include "weaverec/synthetic.hpp"

namespace {

using namespace weaverec;

enum ExitCode : int {
  kOk = 0,
  kConfigFailure = 1,
  kDataFailure = 2,
  kTrainingFailure = 3,
  kMergeEvalFailure = 4,
};

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string target;
  std::string sources;
  std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_file, "key=value configuration file");
  cmd->add_option("-s,--set", opts.overrides, "override one setting, e.g. --set train.lr=0.01");
  cmd->add_option("-o,--output-dir", opts.output_dir, "output directory");
  cmd->add_option("--target", opts.target, "target domain id");
  cmd->add_option("--sources", opts.sources, "comma-separated source domain ids ('' for none)");
  cmd->add_option("--seed", opts.seed, "experiment seed");
}

ConfigMap build_config_map(const CommonOptions& opts) {
  ConfigMap map = opts.config_file.empty() ? ConfigMap{} : ConfigMap::load(opts.config_file);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    map.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opts.output_dir.empty()) {
    map.set("output_dir", opts.output_dir);
  }
  if (!opts.target.empty()) {
    map.set("target", opts.target);
  }
  if (opts.sources != "\x01") {
    map.set("sources", opts.sources);
  }
  if (opts.seed >= 0) {
    map.set("seed", std::to_string(opts.seed));
  }
  return map;
}

ExperimentConfig load_experiment(const CommonOptions& opts) {
  auto config = experiment_from_config(build_config_map(opts));
  validate(config);
  return config;
}

double parse_number(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used == text.size()) {
      return value;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(what) + ": '" + text + "' is not a number");
}

void print_metrics(const std::string& label, const MetricSummary& m) {
  std::cout << std::left << std::setw(28) << label << std::right << std::fixed
            << std::setprecision(4) << "  ndcg@1 " << m.ndcg1 << "  ndcg@3 " << m.ndcg3
            << "  ndcg@5 " << m.ndcg5 << "  mrr@5 " << m.mrr5 << '\n';
}

void print_manifest(const RunManifest& manifest) {
  for (const auto& a : manifest.artifacts) {
    std::cout << (a.reused ? "reused   " : "produced ") << a.path << "  " << a.sha256.substr(0, 16)
              << '\n';
  }
  for (const auto& r : manifest.reports) {
    print_metrics(r.method, r.aggregate);
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << text;
}

int cmd_gen_data(const CommonOptions& opts) {
  const auto config = load_experiment(opts);
  if (!config.synthetic) {
    throw ConfigError("gen-data needs data=synthetic");
  }
  const auto world = generate_synthetic(config.synth);
  const auto dir = config.output_dir / "data";
  std::filesystem::create_directories(dir);
  auto dump = [&](const DomainDataset& d) {
    std::ostringstream inter;
    std::ostringstream titles;
    export_interactions(d, inter);
    export_titles(d, titles);
    write_file(dir / (d.domain_id + ".interactions.csv"), inter.str());
    write_file(dir / (d.domain_id + ".titles.tsv"), titles.str());
    std::cout << d.domain_id << ": " << d.users.size() << " users, " << d.catalog.size()
              << " items, " << d.interaction_count() << " interactions\n";
  };
  for (const auto& d : world.domains) {
    dump(d);
  }
  dump(world.generic);
  std::cout << "wrote " << dir.string() << '\n';
  return kOk;
}

int cmd_ingest(const CommonOptions& opts, const std::string& domain, const std::string& inter,
               const std::string& titles) {
  const auto config = load_experiment(opts);
  ItemRegistry registry;
  auto result = ingest_interactions(inter, titles, domain, registry);
  const auto before = result.dataset.interaction_count();
  const auto filtered = five_core_filter(result.dataset);
  const auto split = leave_one_out_split(filtered);
  std::cout << domain << ": " << before << " interactions (" << result.duplicates_removed
            << " duplicates removed), " << filtered.users.size() << " users and "
            << filtered.catalog.size() << " items after five-core filtering, "
            << split.users.size() << " leave-one-out users\n";
  const auto dir = config.output_dir / "data";
  std::ostringstream out_inter;
  std::ostringstream out_titles;
  export_interactions(filtered, out_inter);
  export_titles(filtered, out_titles);
  write_file(dir / (domain + ".interactions.csv"), out_inter.str());
  write_file(dir / (domain + ".titles.tsv"), out_titles.str());
  return kOk;
}

int cmd_pretrain(const CommonOptions& opts) {
  Experiment exp(load_experiment(opts));
  exp.base();
  exp.write_manifest("pretrain");
  print_manifest(exp.manifest());
  return kOk;
}

int cmd_render(const CommonOptions& opts, std::size_t max_per_domain) {
  Experiment exp(load_experiment(opts));
  for (const auto& path : write_instruction_datasets(exp, max_per_domain)) {
    std::cout << "wrote " << path.string() << '\n';
  }
  return kOk;
}

int cmd_train_adapter(const CommonOptions& opts, const std::string& role,
                      const std::string& source) {
  Experiment exp(load_experiment(opts));
  const LoraAdapter* adapter = nullptr;
  std::string method;
  if (role == "target") {
    adapter = &exp.target_adapter();
    method = "target-only";
  } else if (role == "hybrid" || role == "source") {
    if (source.empty()) {
      throw ConfigError("--role " + role + " needs --source");
    }
    adapter = role == "hybrid" ? &exp.hybrid_adapter(source) : &exp.source_adapter(source);
    method = role == "hybrid" ? "hybrid/" + source : "source-only/" + source;
  } else if (role == "all-data") {
    adapter = &exp.all_data_adapter();
    method = "all-data-merging";
  } else {
    throw ConfigError("--role must be target, hybrid, source or all-data");
  }
  exp.evaluate_method(method, *adapter);
  exp.write_manifest("train-adapter");
  print_manifest(exp.manifest());
  return kOk;
}

int cmd_merge(const CommonOptions& opts, const std::vector<std::string>& inputs,
              const std::string& lambdas_text, const std::string& method_name,
              const std::string& mode_name, const std::string& output) {
  const auto config = load_experiment(opts);
  if (inputs.empty()) {
    throw ConfigError("merge needs --inputs");
  }
  std::vector<LoraAdapter> adapters;
  std::vector<std::string> hashes;
  for (const auto& path : inputs) {
    adapters.push_back(load_lora_adapter(path));
    hashes.push_back(sha256_file(path));
  }
  MergeSpec spec;
  spec.method = parse_merge_method(method_name);
  spec.mode = parse_merge_mode(mode_name);
  spec.trim_fraction = config.ties_trim;
  spec.drop_prob = config.dare_drop;
  spec.seed = config.seed;
  if (lambdas_text.empty()) {
    spec.lambdas = uniform_lambdas(adapters.size());
  } else {
    for (const auto& piece : split_list(lambdas_text)) {
      spec.lambdas.push_back(parse_number(piece, "--lambdas"));
    }
  }
  CheckpointContent content;
  switch (spec.method) {
    case MergeMethod::kWeightAverage:
      if (spec.mode == MergeMode::kFactor) {
        content = weight_average(adapters, spec.lambdas);
      } else {
        content = product_average(adapters, spec.lambdas);
      }
      break;
    case MergeMethod::kTies:
    case MergeMethod::kDareAverage: {
      spec.mode = MergeMode::kProduct;
      std::vector<DenseDelta> deltas;
      for (const auto& a : adapters) {
        deltas.push_back(to_task_vector(a));
      }
      content = spec.method == MergeMethod::kTies
                    ? ties_merge(deltas, spec.trim_fraction, spec.lambdas)
                    : dare_average(deltas, spec.drop_prob, spec.lambdas, RngStream(spec.seed));
      break;
    }
    case MergeMethod::kLego: {
      spec.lego_rank = config.lego_rank == 0 ? adapters.front().rank : config.lego_rank;
      auto rng = RngStream(spec.seed);
      content = lego_merge(adapters, spec.lego_rank, rng);
      break;
    }
    case MergeMethod::kLearned:
      throw ConfigError("learned coefficients need unlabeled data; use 'baselines --methods "
                        "learned-lambda'");
  }
  CheckpointMetadata meta;
  meta.lineage = inputs;
  meta.training_seed = spec.seed;
  meta.provenance_json = merge_provenance_json(spec, hashes, inputs);
  save_checkpoint(output, content, meta);
  std::cout << "wrote " << output << "  " << sha256_file(output) << '\n';
  return kOk;
}

int cmd_eval(const CommonOptions& opts, const std::string& checkpoint, const std::string& label) {
  Experiment exp(load_experiment(opts));
  auto ckpt = load_checkpoint(checkpoint);
  const std::string method = label.empty() ? std::filesystem::path(checkpoint).stem().string() : label;
  EvalReport report;
  if (const auto* lora = std::get_if<LoraAdapter>(&ckpt.content)) {
    report = exp.evaluate_method(method, *lora);
  } else if (const auto* dense = std::get_if<DenseDelta>(&ckpt.content)) {
    report = exp.evaluate_method(method, *dense);
  } else {
    report = exp.evaluate_method(method, AdapterView{});
  }
  print_metrics(method, report.aggregate);
  return kOk;
}

int cmd_weaverec(const CommonOptions& opts) {
  print_manifest(run_weaverec(load_experiment(opts)));
  return kOk;
}

int cmd_baselines(const CommonOptions& opts, const std::string& methods_text) {
  const auto methods =
      methods_text.empty() ? default_baseline_methods() : split_list(methods_text);
  print_manifest(run_baselines(load_experiment(opts), methods));
  return kOk;
}

int cmd_landscape(const CommonOptions& opts, std::size_t grid_res, const std::string& metric) {
  Experiment exp(load_experiment(opts));
  const auto& config = exp.config();
  if (config.sources.empty()) {
    throw ConfigError("landscape needs at least one source domain");
  }
  const auto& src = config.sources.front();
  const auto grid = landscape_grid(exp.base(), exp.target_adapter(), exp.hybrid_adapter(src),
                                   exp.source_adapter(src), grid_res, exp.target_test_cases(),
                                   parse_metric(metric));
  std::ostringstream csv;
  grid.write_csv(csv);
  write_file(config.output_dir / "tables/landscape.csv", csv.str());
  std::cout << "anchors (a=target, b=hybrid/" << src << ", c=source/" << src << "):\n";
  for (const auto& a : grid.anchors) {
    std::cout << "  " << a.label << "  s=" << a.s << "  t=" << a.t << "  " << metric << "="
              << a.value << '\n';
  }
  exp.write_manifest("landscape");
  return kOk;
}

int cmd_hdiv(const CommonOptions& opts, double lambda) {
  Experiment exp(load_experiment(opts));
  const auto& config = exp.config();
  if (config.sources.empty()) {
    throw ConfigError("hdiv needs at least one source domain");
  }
  const auto& source = config.sources.front();
  const auto result = divergence_ordering(exp, source, lambda);
  // The bound's other ingredient: target-domain error of the model trained on
  // the mixture versus the model trained on the source alone.
  const auto hybrid = exp.evaluate_method("hybrid/" + source, exp.hybrid_adapter(source));
  const auto source_only =
      exp.evaluate_method("source-only/" + source, exp.source_adapter(source));
  const double err_m = 1.0 - hybrid.aggregate.ndcg5;
  const double err_s = 1.0 - source_only.aggregate.ndcg5;
  auto doc = nlohmann::json::parse(result.to_json());
  doc["target_error_mixture_model"] = err_m;
  doc["target_error_source_model"] = err_s;
  doc["target_error_metric"] = "1 - ndcg@5";
  write_file(config.output_dir / "reports/hdiv.json", doc.dump(2));
  std::cout << "d_hat(D_M, D_T) = " << result.mixed_vs_target.d_hat
            << "\nd_hat(D_S, D_T) = " << result.source_vs_target.d_hat
            << "\nordering d(D_M,D_T) < d(D_S,D_T): " << (result.ordered() ? "yes" : "no")
            << "\ntarget error (1 - ndcg@5): mixture model " << err_m << ", source model "
            << err_s << '\n';
  exp.write_manifest("hdiv");
  return kOk;
}

int cmd_sweep(const CommonOptions& opts, const std::string& alphas_text) {
  Experiment exp(load_experiment(opts));
  const auto& config = exp.config();
  if (config.sources.empty()) {
    throw ConfigError("sweep needs at least one source domain");
  }
  std::vector<double> alphas;
  if (alphas_text.empty()) {
    for (int i = 0; i <= 10; ++i) {
      alphas.push_back(i / 10.0);
    }
  } else {
    for (const auto& piece : split_list(alphas_text)) {
      alphas.push_back(parse_number(piece, "--alphas"));
    }
  }
  const auto curve = interpolation_sweep(exp.base(), exp.target_adapter(),
                                         exp.hybrid_adapter(config.sources.front()), alphas,
                                         exp.target_test_cases());
  std::ostringstream csv;
  write_sweep_csv(csv, curve);
  write_file(config.output_dir / "tables/sweep.csv", csv.str());
  for (const auto& p : curve) {
    std::ostringstream label;
    label << "alpha=" << std::setprecision(2) << p.alpha;
    print_metrics(label.str(), p.metrics);
  }
  exp.write_manifest("sweep");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WeaveRec lab: LoRA merging for cross-domain sequential recommendation"};
  app.require_subcommand(1);

  std::map<std::string, CommonOptions> opts;
  const auto sub = [&](const std::string& name, const std::string& help) {
    auto* cmd = app.add_subcommand(name, help);
    auto& o = opts[name];
    o.sources = "\x01";  // sentinel: flag not given
    add_common(cmd, o);
    return cmd;
  };

  sub("gen-data", "generate the synthetic multi-domain corpus as CSV");
  auto* ingest = sub("ingest", "load, deduplicate and five-core filter an interaction log");
  std::string ingest_domain;
  std::string ingest_inter;
  std::string ingest_titles;
  ingest->add_option("--domain", ingest_domain, "domain id")->required();
  ingest->add_option("--interactions", ingest_inter, "CSV with user_id,item_id,timestamp")
      ->required();
  ingest->add_option("--titles", ingest_titles, "tab-separated item_id and title")->required();

  sub("pretrain", "pretrain (or reuse) the frozen base model");
  auto* render = sub("render-instructions", "write instruction-format JSONL per domain");
  std::size_t render_max = 1000;
  render->add_option("--max", render_max, "examples per domain (0 = all)");

  auto* train = sub("train-adapter", "train one LoRA branch");
  std::string role = "target";
  std::string train_source;
  train->add_option("--role", role, "target | hybrid | source | all-data");
  train->add_option("--source", train_source, "source domain for hybrid/source roles");

  auto* merge = sub("merge", "merge adapter checkpoints");
  std::vector<std::string> merge_inputs;
  std::string merge_lambdas;
  std::string merge_method = "weight-average";
  std::string merge_mode = "factor";
  std::string merge_output = "merged.wvrc";
  merge->add_option("--inputs", merge_inputs, "adapter checkpoints")->delimiter(',');
  merge->add_option("--lambdas", merge_lambdas, "comma-separated coefficients (default uniform)");
  merge->add_option("--method", merge_method, "weight-average | ties | dare+average | lego");
  merge->add_option("--mode", merge_mode, "factor | product");
  merge->add_option("--out", merge_output, "output checkpoint");

  auto* eval = sub("eval", "evaluate a checkpoint on the target test split");
  std::string eval_ckpt;
  std::string eval_label;
  eval->add_option("--checkpoint", eval_ckpt, "adapter, delta or base checkpoint")->required();
  eval->add_option("--label", eval_label, "method name for the report");

  auto* weaverec = sub("weaverec", "run the three-stage WeaveRec pipeline");
  bool grid_search = false;
  std::string grid_step;
  weaverec->add_flag("--grid-search", grid_search,
                     "pick lambdas by validation MRR@5 over a simplex grid");
  weaverec->add_option("--grid-step", grid_step, "simplex grid resolution (default 0.1)");
  auto* baselines = sub("baselines", "train and evaluate comparison methods");
  std::string methods;
  baselines->add_option("--methods", methods, "comma-separated methods");

  auto* landscape = sub("landscape", "2-D performance landscape around target/hybrid/source");
  std::size_t grid_res = 9;
  std::string landscape_metric = "ndcg@5";
  landscape->add_option("--grid-res", grid_res, "cells per axis");
  landscape->add_option("--metric", landscape_metric, "ndcg@1 | ndcg@3 | ndcg@5 | mrr@5");

  auto* hdiv = sub("hdiv", "probe-based H-divergence ordering check");
  double hdiv_lambda = 1.0;
  hdiv->add_option("--lambda", hdiv_lambda, "mixture ratio");

  auto* sweep = sub("sweep", "interpolate target and hybrid adapters");
  std::string sweep_alphas;
  sweep->add_option("--alphas", sweep_alphas, "comma-separated alphas (default 0,0.1,...,1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit cleanly; anything else is a usage error.
    return app.exit(e) == 0 ? kOk : kConfigFailure;
  }

  try {
    const auto* cmd = app.get_subcommands().front();
    const auto& name = cmd->get_name();
    const auto& o = opts[name];
    if (name == "gen-data") return cmd_gen_data(o);
    if (name == "ingest") return cmd_ingest(o, ingest_domain, ingest_inter, ingest_titles);
    if (name == "pretrain") return cmd_pretrain(o);
    if (name == "render-instructions") return cmd_render(o, render_max);
    if (name == "train-adapter") return cmd_train_adapter(o, role, train_source);
    if (name == "merge")
      return cmd_merge(o, merge_inputs, merge_lambdas, merge_method, merge_mode, merge_output);
    if (name == "eval") return cmd_eval(o, eval_ckpt, eval_label);
    if (name == "weaverec") {
      auto with_grid = o;
      if (grid_search) {
        with_grid.overrides.push_back("merge.grid_search=true");
      }
      if (!grid_step.empty()) {
        with_grid.overrides.push_back("merge.grid_step=" + grid_step);
      }
      return cmd_weaverec(with_grid);
    }
    if (name == "baselines") return cmd_baselines(o, methods);
    if (name == "landscape") return cmd_landscape(o, grid_res, landscape_metric);
    if (name == "hdiv") return cmd_hdiv(o, hdiv_lambda);
    if (name == "sweep") return cmd_sweep(o, sweep_alphas);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataFailure;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kDataFailure;
  } catch (const TrainingError& e) {
    std::cerr << "training failure: " << e.what() << '\n';
    return kTrainingFailure;
  } catch (const MergeError& e) {
    std::cerr << "merge failure: " << e.what() << '\n';
    return kMergeEvalFailure;
  } catch (const EvalError& e) {
    std::cerr << "evaluation failure: " << e.what() << '\n';
    return kMergeEvalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMergeEvalFailure;
  }
  return kOk;
}
