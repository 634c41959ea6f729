// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "weaverec/model.hpp"

namespace weaverec {

/// WVRC container layout (all integers little-endian):
///
///   bytes 0..3   magic "WVRC"
///   bytes 4..5   u16 format version
///   bytes 6..9   u32 header length H
///   next H bytes JSON header: kind, tensors [{name, shape, offset}],
///                metadata, payload_bytes, payload_sha256
///   remainder    float64 tensor payloads at the listed byte offsets
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointMetadata {
  std::vector<std::string> lineage;  // domains that shaped the weights
  std::uint64_t training_seed = 0;
  /// Free-form string attributes (stage keys, labels).
  std::map<std::string, std::string> attributes;
  /// Canonical JSON object describing how a merged artifact was built, or
  /// empty.
  std::string provenance_json;

  friend bool operator==(const CheckpointMetadata&, const CheckpointMetadata&) = default;
};

using CheckpointContent = std::variant<BaseModel, LoraAdapter, DenseDelta>;

struct Checkpoint {
  CheckpointContent content;
  CheckpointMetadata metadata;
};

std::vector<std::byte> encode_checkpoint(const CheckpointContent& content,
                                         const CheckpointMetadata& metadata);
/// Throws CheckpointError with a kind per failure mode.
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);

/// Writes to a temporary sibling then renames over `path`.
void save_checkpoint(const std::filesystem::path& path, const CheckpointContent& content,
                     const CheckpointMetadata& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

BaseModel load_base_model(const std::filesystem::path& path);
LoraAdapter load_lora_adapter(const std::filesystem::path& path);
DenseDelta load_dense_delta(const std::filesystem::path& path);

/// SHA-256 of the encoded bytes; identical for byte-identical checkpoints.
std::string checkpoint_hash(const CheckpointContent& content, const CheckpointMetadata& metadata);

}  // namespace weaverec
