// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/instruction.hpp"

#include <json.hpp>
#include <ostream>

#include "weaverec/error.hpp"

namespace weaverec {

namespace {

const std::string& title_of(const Catalog& catalog, ItemId id) {
  const auto it = catalog.find(id);
  if (it == catalog.end() || it->second.title.empty()) {
    throw DataError("render_instruction: item " + std::to_string(id) + " has no title");
  }
  return it->second.title;
}

void replace_all(std::string& text, std::string_view placeholder, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(placeholder, pos)) != std::string::npos) {
    text.replace(pos, placeholder.size(), value);
    pos += value.size();
  }
}

}  // namespace

const InstructionTemplate& default_instruction_template() {
  static const InstructionTemplate kTemplate{
      "The user has interacted with the following items in chronological order: {history}\n"
      "Candidate items:\n"
      "{candidates}"
      "Rank the candidate items by how likely the user is to interact with each of them next. "
      "Answer with the ranked list of item titles.",
      "(no previous interactions)"};
  return kTemplate;
}

InstructionExample render_instruction(std::span<const ItemId> prefix,
                                      const CandidateSet& candidates, const Catalog& catalog,
                                      const InstructionTemplate& tmpl, std::string_view domain_id) {
  std::string history;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (i > 0) {
      history += ", ";
    }
    history += "\"" + title_of(catalog, prefix[i]) + "\"";
  }
  if (prefix.empty()) {
    history = tmpl.empty_history;
  }

  auto order = candidates.all();
  RngStream rng(candidates.ordering_seed);
  rng.shuffle(order);
  std::string block;
  for (std::size_t i = 0; i < order.size(); ++i) {
    block += std::to_string(i + 1) + ". \"" + title_of(catalog, order[i]) + "\"\n";
  }

  std::string output = "1. \"" + title_of(catalog, candidates.ground_truth) + "\"";
  std::size_t rank = 2;
  for (ItemId id : order) {
    if (id != candidates.ground_truth) {
      output += "\n" + std::to_string(rank++) + ". \"" + title_of(catalog, id) + "\"";
    }
  }

  InstructionExample example;
  example.input = tmpl.prompt;
  replace_all(example.input, "{history}", history);
  replace_all(example.input, "{candidates}", block);
  example.output = std::move(output);
  example.domain_id = std::string(domain_id);
  return example;
}

std::string to_jsonl_line(const InstructionExample& example) {
  const nlohmann::json j = {
      {"input", example.input}, {"output", example.output}, {"domain", example.domain_id}};
  return j.dump();
}

void write_jsonl(std::ostream& out, std::span<const InstructionExample> examples) {
  for (const auto& ex : examples) {
    out << to_jsonl_line(ex) << '\n';
  }
}

}  // namespace weaverec
