// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "weaverec/dataset.hpp"

namespace weaverec {

/// Prompt template with `{history}` and `{candidates}` placeholders.
struct InstructionTemplate {
  std::string prompt;
  std::string empty_history;
};

const InstructionTemplate& default_instruction_template();

struct InstructionExample {
  std::string input;
  std::string output;
  std::string domain_id;

  friend bool operator==(const InstructionExample&, const InstructionExample&) = default;
};

/// Renders history and candidates by title. Candidate order is a shuffle
/// seeded by `candidates.ordering_seed`; the output lists the ground truth
/// first, then the remaining candidates in presented order. Throws DataError
/// naming any item without a title.
InstructionExample render_instruction(std::span<const ItemId> prefix,
                                      const CandidateSet& candidates, const Catalog& catalog,
                                      const InstructionTemplate& tmpl, std::string_view domain_id);

/// One JSON object `{"domain":..,"input":..,"output":..}` without newline.
std::string to_jsonl_line(const InstructionExample& example);
void write_jsonl(std::ostream& out, std::span<const InstructionExample> examples);

}  // namespace weaverec
