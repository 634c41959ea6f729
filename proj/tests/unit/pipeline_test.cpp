// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "weaverec/checkpoint.hpp"
#include "weaverec/config.hpp"
#include "weaverec/error.hpp"
#include "weaverec/pipeline.hpp"

namespace weaverec {
namespace {

namespace fs = std::filesystem;

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("weaverec_pipeline_" + std::string(::testing::UnitTest::GetInstance()
                                                    ->current_test_info()
                                                    ->name()));
    fs::remove_all(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  ExperimentConfig config(const std::string& dir, const std::string& sources,
                          const std::string& extra = "") const {
    std::istringstream in(
        "synthetic.users_per_domain = 80\n"
        "synthetic.items_per_domain = 64\n"
        "synthetic.generic_users = 150\n"
        "model.dim = 8\n"
        "pretrain.epochs = 2\n"
        "train.epochs = 3\n"
        "train.optimizer = adam\n"
        "train.lr = 0.01\n"
        "merge.unlabeled = 10\n"
        "merge.learn_steps = 3\n" +
        extra);
    auto map = ConfigMap::parse(in);
    map.set("sources", sources);
    map.set("output_dir", (root_ / dir).string());
    auto c = experiment_from_config(map);
    validate(c);
    return c;
  }

  fs::path root_;
};

std::size_t count_role(const RunManifest& m, const std::string& role) {
  return static_cast<std::size_t>(std::count_if(m.artifacts.begin(), m.artifacts.end(),
                                                [&](const auto& a) { return a.role == role; }));
}

TEST_F(PipelineTest, NoSourcesDegeneratesToTargetOnly) {
  const auto c = config("n0", "");
  const auto manifest = run_weaverec(c);
  const auto* merged = manifest.find("merged/d0");
  ASSERT_NE(merged, nullptr);
  const auto merged_adapter = load_lora_adapter(c.output_dir / merged->path);
  const auto target = load_lora_adapter(c.output_dir / manifest.find("target")->path);
  EXPECT_EQ(merged_adapter, target);
  EXPECT_EQ(manifest.report("weaverec")->aggregate, manifest.report("target-only")->aggregate);
}

TEST_F(PipelineTest, OneSourceReferencesThreeAdapters) {
  const auto c = config("n1", "d1");
  const auto manifest = run_weaverec(c);
  EXPECT_EQ(count_role(manifest, "target"), 1u);
  EXPECT_EQ(count_role(manifest, "hybrid"), 1u);
  EXPECT_EQ(count_role(manifest, "merged"), 1u);
  EXPECT_EQ(count_role(manifest, "source"), 0u);
  EXPECT_EQ(manifest.artifacts.size(), 4u);  // plus the base
  const auto* merged = manifest.find("merged/d0+d1");
  ASSERT_NE(merged, nullptr);
  EXPECT_EQ(merged->parameter_count, manifest.find("target")->parameter_count);

  const auto ckpt = load_checkpoint(c.output_dir / merged->path);
  const auto prov = nlohmann::json::parse(ckpt.metadata.provenance_json);
  EXPECT_EQ(prov.at("lambdas"), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(prov.at("inputs").size(), 2u);
  EXPECT_EQ(prov.at("inputs")[0].at("sha256"), manifest.find("target")->sha256);
  EXPECT_EQ(prov.at("inputs")[1].at("sha256"), manifest.find("hybrid/d1")->sha256);

  EXPECT_TRUE(fs::exists(c.output_dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(c.output_dir / "tables/weaverec.csv"));
  EXPECT_TRUE(fs::exists(c.output_dir / "reports/weaverec.json"));
  EXPECT_TRUE(fs::exists(c.output_dir / "instructions"));
}

TEST_F(PipelineTest, SameConfigSameHashes) {
  const auto a = run_weaverec(config("a", "d1"));
  const auto b = run_weaverec(config("b", "d1"));
  EXPECT_EQ(a.config_hash, b.config_hash);
  ASSERT_EQ(a.artifacts.size(), b.artifacts.size());
  for (std::size_t i = 0; i < a.artifacts.size(); ++i) {
    EXPECT_EQ(a.artifacts[i].label, b.artifacts[i].label);
    EXPECT_EQ(a.artifacts[i].sha256, b.artifacts[i].sha256) << a.artifacts[i].label;
  }
}

TEST_F(PipelineTest, AddingASourceTrainsOnlyOneBranch) {
  const auto first = run_weaverec(config("inc", "d1"));
  const auto second = run_weaverec(config("inc", "d1,d2"));
  for (const auto& label : {"base", "target", "hybrid/d1"}) {
    ASSERT_NE(second.find(label), nullptr) << label;
    EXPECT_EQ(second.find(label)->sha256, first.find(label)->sha256) << label;
    EXPECT_TRUE(second.find(label)->reused) << label;
  }
  ASSERT_NE(second.find("hybrid/d2"), nullptr);
  EXPECT_FALSE(second.find("hybrid/d2")->reused);
  EXPECT_EQ(second.trained_adapters(), 1u);
  EXPECT_NE(second.find("merged/d0+d1+d2"), nullptr);
}

TEST_F(PipelineTest, BaselinesUseDistinctProvenanceAndEmitTable) {
  const auto c = config("base", "d1");
  const std::vector<std::string> methods{"target-only", "weaverec", "naive-wa", "ties",
                                         "dare+wa", "lego", "learned-lambda", "all-data-merging"};
  const auto manifest = run_baselines(c, methods);
  for (const auto& m : methods) {
    EXPECT_NE(manifest.report(m), nullptr) << m;
  }
  const auto naive = load_checkpoint(c.output_dir / manifest.find("merged/naive-wa__d0+d1")->path);
  const auto weave = load_checkpoint(c.output_dir / manifest.find("merged/d0+d1")->path);
  EXPECT_NE(naive.metadata.lineage, weave.metadata.lineage);
  EXPECT_EQ(naive.metadata.lineage, (std::vector<std::string>{"target", "source/d1"}));
  EXPECT_EQ(weave.metadata.lineage, (std::vector<std::string>{"target", "hybrid/d1"}));

  std::ifstream table(c.output_dir / "tables/baselines.csv");
  std::string line;
  std::getline(table, line);
  int rows = 0;
  while (std::getline(table, line)) {
    ++rows;
  }
  EXPECT_EQ(rows, static_cast<int>(methods.size() * 4));
}

TEST_F(PipelineTest, GridSearchPicksLambdasFromTheSimplex) {
  const auto c = config("grid", "d1", "merge.grid_search = true\nmerge.grid_step = 0.25\n");
  const auto manifest = run_weaverec(c);
  const auto ckpt = load_checkpoint(c.output_dir / manifest.find("merged/d0+d1")->path);
  const auto lambdas =
      nlohmann::json::parse(ckpt.metadata.provenance_json).at("lambdas").get<std::vector<double>>();
  ASSERT_EQ(lambdas.size(), 2u);
  EXPECT_DOUBLE_EQ(lambdas[0] + lambdas[1], 1.0);
  EXPECT_DOUBLE_EQ(std::fmod(lambdas[0] * 4.0, 1.0), 0.0);
  std::ifstream grid(c.output_dir / "tables/lambda-grid.csv");
  std::string line;
  int rows = -1;
  while (std::getline(grid, line)) {
    ++rows;
  }
  EXPECT_EQ(rows, 5);
}

TEST_F(PipelineTest, StageFailuresAreTaggedAndKeepTheirCategory) {
  auto broken = config("fail", "d1");
  broken.adapter.optimizer = OptimizerKind::kSgd;
  broken.adapter.learning_rate = 1e300;
  try {
    run_weaverec(broken);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("[", 0), 0u) << e.what();
  }
  // The base checkpoint from the failed run is retained.
  EXPECT_TRUE(fs::exists(broken.output_dir / "checkpoints/base.wvrc"));
}

}  // namespace
}  // namespace weaverec
