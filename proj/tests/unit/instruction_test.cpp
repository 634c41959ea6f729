// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "weaverec/error.hpp"
#include "weaverec/instruction.hpp"

namespace weaverec {
namespace {

Catalog book_catalog() {
  return {{0, {"b0", "The Hobbit"}},
          {1, {"b1", "Dune"}},
          {2, {"b2", "Emma"}},
          {3, {"b3", "Ulysses"}},
          {4, {"b4", "Beloved"}}};
}

CandidateSet three_candidates() {
  CandidateSet c;
  c.ground_truth = 2;
  c.negatives = {3, 4};
  c.ordering_seed = 11;
  return c;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(RenderInstruction, MatchesGoldenPrompt) {
  const std::vector<ItemId> history{0, 1};
  const auto ex = render_instruction(history, three_candidates(), book_catalog(),
                                     default_instruction_template(), "books");
  const std::filesystem::path dir = WEAVEREC_GOLDEN_DIR;
  EXPECT_EQ(ex.input, read_file(dir / "prompt_2hist_3cand.input.txt"));
  EXPECT_EQ(ex.output, read_file(dir / "prompt_2hist_3cand.output.txt"));
}

TEST(RenderInstruction, EmptyHistoryUsesMarker) {
  const auto ex = render_instruction({}, three_candidates(), book_catalog(),
                                     default_instruction_template(), "books");
  EXPECT_NE(ex.input.find(default_instruction_template().empty_history), std::string::npos);
  for (const char* title : {"Emma", "Ulysses", "Beloved"}) {
    EXPECT_NE(ex.input.find(title), std::string::npos);
  }
}

TEST(RenderInstruction, DeterministicUnderSeed) {
  const std::vector<ItemId> history{0, 1};
  const auto a = render_instruction(history, three_candidates(), book_catalog(),
                                    default_instruction_template(), "books");
  const auto b = render_instruction(history, three_candidates(), book_catalog(),
                                    default_instruction_template(), "books");
  EXPECT_EQ(a, b);
  EXPECT_EQ(to_jsonl_line(a), to_jsonl_line(b));
}

TEST(RenderInstruction, GroundTruthLeadsTheAnswer) {
  const auto ex = render_instruction(std::vector<ItemId>{0}, three_candidates(), book_catalog(),
                                     default_instruction_template(), "books");
  EXPECT_EQ(ex.output.rfind("1. \"Emma\"", 0), 0u);
}

TEST(RenderInstruction, MissingTitleNamesItem) {
  auto catalog = book_catalog();
  catalog.erase(4);
  try {
    render_instruction(std::vector<ItemId>{0}, three_candidates(), catalog,
                       default_instruction_template(), "books");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("item 4"), std::string::npos);
  }
}

TEST(Jsonl, OneObjectPerLineWithExpectedFields) {
  const auto ex = render_instruction(std::vector<ItemId>{0, 1}, three_candidates(),
                                     book_catalog(), default_instruction_template(), "books");
  std::ostringstream out;
  const std::vector<InstructionExample> batch{ex, ex};
  write_jsonl(out, batch);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("domain"), "books");
    EXPECT_EQ(j.at("input"), ex.input);
    EXPECT_EQ(j.at("output"), ex.output);
    ++lines;
  }
  EXPECT_EQ(lines, 2);
}

}  // namespace
}  // namespace weaverec
