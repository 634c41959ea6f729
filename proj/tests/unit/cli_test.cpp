// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "weaverec/checkpoint.hpp"
#include "weaverec/model.hpp"
#include "weaverec/numeric.hpp"

namespace weaverec {
namespace {

namespace fs = std::filesystem;

// Per-test directory, since ctest runs the cases as parallel processes.
fs::path kWorkDir;

// Runs the CLI with `args` and returns its exit status.
int run_cli(const std::string& args) {
  const std::string cmd = std::string(WEAVEREC_CLI_PATH) + " " + args + " > " +
                          (kWorkDir / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string small_world() {
  return "--set synthetic.users_per_domain=150 --set synthetic.items_per_domain=48 "
         "--set synthetic.generic_users=100 --set model.dim=8 --set pretrain.epochs=1 "
         "--set train.epochs=1 -o " +
         (kWorkDir / "out").string();
}

void write_adapter(const fs::path& path, std::size_t rank, std::uint64_t seed) {
  RngStream rng(seed);
  const auto base = BaseModel::initialize({10, 4, 5}, rng);
  LoraConfig cfg;
  cfg.rank = rank;
  save_checkpoint(path, init_adapter(base, cfg, rng), {});
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    kWorkDir = fs::temp_directory_path() /
               ("weaverec_cli_" +
                std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(kWorkDir);
    fs::create_directories(kWorkDir);
  }
  void TearDown() override { fs::remove_all(kWorkDir); }
};

TEST_F(CliTest, HelpSucceeds) { EXPECT_EQ(run_cli("--help"), 0); }

TEST_F(CliTest, UsageErrorsAreConfigFailures) {
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("weaverec --set no.such.key=1"), 1);
  EXPECT_EQ(run_cli("weaverec --config " + (kWorkDir / "missing.cfg").string()), 1);
  EXPECT_EQ(run_cli("weaverec --target d0 --sources d0"), 1);
}

TEST_F(CliTest, GenDataSucceeds) {
  EXPECT_EQ(run_cli("gen-data " + small_world()), 0);
  EXPECT_TRUE(fs::exists(kWorkDir / "out/data/d0.interactions.csv"));
  EXPECT_TRUE(fs::exists(kWorkDir / "out/data/d0.titles.tsv"));
}

TEST_F(CliTest, DataProblemsExitWithTwo) {
  EXPECT_EQ(run_cli("ingest --domain books --interactions " + (kWorkDir / "none.csv").string() +
                    " --titles " + (kWorkDir / "none.tsv").string()),
            2);
  std::ofstream(kWorkDir / "junk.wvrc") << "not a checkpoint";
  EXPECT_EQ(run_cli("eval --checkpoint " + (kWorkDir / "junk.wvrc").string() + " " +
                    small_world()),
            2);
}

TEST_F(CliTest, IngestRoundTrip) {
  std::ofstream(kWorkDir / "i.csv") << "user_id,item_id,timestamp\n";
  {
    std::ofstream rows(kWorkDir / "i.csv", std::ios::app);
    std::ofstream titles(kWorkDir / "t.tsv");
    for (int item = 0; item < 6; ++item) {
      titles << "it" << item << "\tTitle " << item << '\n';
    }
    for (int user = 0; user < 6; ++user) {
      for (int item = 0; item < 6; ++item) {
        rows << "u" << user << ",it" << item << ',' << item << '\n';
      }
    }
  }
  EXPECT_EQ(run_cli("ingest --domain toy --interactions " + (kWorkDir / "i.csv").string() +
                    " --titles " + (kWorkDir / "t.tsv").string() + " -o " +
                    (kWorkDir / "out").string()),
            0);
}

TEST_F(CliTest, TrainingDivergenceExitsWithThree) {
  EXPECT_EQ(run_cli("train-adapter " + small_world() +
                    " --set train.optimizer=sgd --set train.lr=1e300"),
            3);
}

TEST_F(CliTest, MergeProblemsExitWithFour) {
  write_adapter(kWorkDir / "a.wvrc", 2, 1);
  write_adapter(kWorkDir / "b.wvrc", 2, 2);
  write_adapter(kWorkDir / "c.wvrc", 3, 3);
  const auto inputs = (kWorkDir / "a.wvrc").string() + "," + (kWorkDir / "b.wvrc").string();
  EXPECT_EQ(run_cli("merge --inputs " + inputs + " --lambdas 0.6,0.6 --out " +
                    (kWorkDir / "m.wvrc").string()),
            4);
  EXPECT_EQ(run_cli("merge --inputs " + (kWorkDir / "a.wvrc").string() + "," +
                    (kWorkDir / "c.wvrc").string() + " --out " + (kWorkDir / "m.wvrc").string()),
            4);
  EXPECT_EQ(run_cli("merge --inputs " + inputs + " --lambdas 0.5,abc"), 1);
  EXPECT_EQ(run_cli("merge --inputs " + inputs + " --lambdas 0.5,0.5 --out " +
                    (kWorkDir / "m.wvrc").string()),
            0);
  EXPECT_TRUE(fs::exists(kWorkDir / "m.wvrc"));
  EXPECT_EQ(load_lora_adapter(kWorkDir / "m.wvrc").rank, 2u);
}

}  // namespace
}  // namespace weaverec
