// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "weaverec/error.hpp"
#include "weaverec/hash.hpp"

namespace weaverec {

namespace {

using nlohmann::json;
using Kind = CheckpointError::Kind;

constexpr std::array<char, 4> kMagic{'W', 'V', 'R', 'C'};
constexpr std::size_t kPreambleBytes = 4 + 2 + 4;

struct NamedTensor {
  std::string name;
  const Matrix* matrix;
};

void put_u16(std::vector<std::byte>& out, std::uint16_t v) {
  out.push_back(static_cast<std::byte>(v & 0xFF));
  out.push_back(static_cast<std::byte>(v >> 8));
}

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
  }
}

void put_f64(std::vector<std::byte>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFF));
  }
}

std::uint64_t get_le(std::span<const std::byte> bytes, std::size_t pos, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
  }
  return v;
}

std::string kind_name(const CheckpointContent& content) {
  switch (content.index()) {
    case 0:
      return "base";
    case 1:
      return "lora";
    default:
      return "dense";
  }
}

std::vector<NamedTensor> tensors_of(const CheckpointContent& content) {
  std::vector<NamedTensor> out;
  if (const auto* base = std::get_if<BaseModel>(&content)) {
    out.push_back({"item_embeddings", &base->item_embeddings});
    for (Layer layer : kAllLayers) {
      out.push_back({std::string(layer_name(layer)), &base->weight(layer)});
    }
  } else if (const auto* lora = std::get_if<LoraAdapter>(&content)) {
    for (Layer layer : kAllLayers) {
      out.push_back({std::string(layer_name(layer)) + ".B", &(*lora)[layer].b});
      out.push_back({std::string(layer_name(layer)) + ".A", &(*lora)[layer].a});
    }
  } else {
    const auto& dense = std::get<DenseDelta>(content);
    for (Layer layer : kAllLayers) {
      out.push_back({std::string(layer_name(layer)) + ".delta", &dense[layer]});
    }
  }
  return out;
}

json metadata_to_json(const CheckpointContent& content, const CheckpointMetadata& meta) {
  json j;
  j["lineage"] = meta.lineage;
  j["training_seed"] = meta.training_seed;
  j["attributes"] = meta.attributes;
  if (!meta.provenance_json.empty()) {
    j["provenance"] = json::parse(meta.provenance_json);
  }
  if (const auto* base = std::get_if<BaseModel>(&content)) {
    j["dims"] = {{"vocab_size", base->dims.vocab_size},
                 {"dim", base->dims.dim},
                 {"max_seq_len", base->dims.max_seq_len}};
  } else if (const auto* lora = std::get_if<LoraAdapter>(&content)) {
    j["rank"] = lora->rank;
    j["alpha"] = lora->alpha;
    j["dropout"] = lora->dropout;
  }
  return j;
}

[[noreturn]] void format_error(const std::string& what) {
  throw CheckpointError(Kind::kFormat, "checkpoint: " + what);
}

Matrix read_tensor(const json& header, std::string_view name,
                   std::span<const std::byte> payload) {
  for (const auto& t : header.at("tensors")) {
    if (t.at("name").get<std::string>() != name) {
      continue;
    }
    const auto rows = t.at("shape").at(0).get<std::size_t>();
    const auto cols = t.at("shape").at(1).get<std::size_t>();
    const auto offset = t.at("offset").get<std::size_t>();
    const std::size_t count = rows * cols;
    if (offset + count * 8 > payload.size()) {
      throw CheckpointError(Kind::kTruncated,
                            "checkpoint: tensor " + std::string(name) + " exceeds payload");
    }
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) {
      data[i] = std::bit_cast<double>(get_le(payload, offset + 8 * i, 8));
    }
    return Matrix::from_data(rows, cols, std::move(data));
  }
  format_error("missing tensor " + std::string(name));
}

}  // namespace

std::vector<std::byte> encode_checkpoint(const CheckpointContent& content,
                                         const CheckpointMetadata& metadata) {
  const auto tensors = tensors_of(content);
  std::vector<std::byte> payload;
  json tensor_list = json::array();
  for (const auto& t : tensors) {
    tensor_list.push_back({{"name", t.name},
                           {"shape", {t.matrix->rows(), t.matrix->cols()}},
                           {"offset", payload.size()}});
    for (double v : t.matrix->data()) {
      put_f64(payload, v);
    }
  }
  json header;
  header["kind"] = kind_name(content);
  header["tensors"] = std::move(tensor_list);
  header["metadata"] = metadata_to_json(content, metadata);
  header["payload_bytes"] = payload.size();
  header["payload_sha256"] = sha256_hex(payload);
  const std::string header_text = header.dump();

  std::vector<std::byte> out;
  out.reserve(kPreambleBytes + header_text.size() + payload.size());
  for (char c : kMagic) {
    out.push_back(static_cast<std::byte>(c));
  }
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  for (char c : header_text) {
    out.push_back(static_cast<std::byte>(c));
  }
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw CheckpointError(Kind::kBadMagic, "checkpoint: bad magic (expected WVRC)");
  }
  if (bytes.size() < kPreambleBytes) {
    throw CheckpointError(Kind::kTruncated, "checkpoint: truncated preamble");
  }
  const auto version = static_cast<std::uint16_t>(get_le(bytes, 4, 2));
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::kVersionMismatch,
                          "checkpoint: format version " + std::to_string(version) +
                              " is not supported (reader expects " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = static_cast<std::size_t>(get_le(bytes, 6, 4));
  if (kPreambleBytes + header_len > bytes.size()) {
    throw CheckpointError(Kind::kTruncated, "checkpoint: truncated header");
  }
  const std::string header_text(reinterpret_cast<const char*>(bytes.data()) + kPreambleBytes,
                                header_len);
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    format_error(std::string("header is not valid JSON: ") + e.what());
  }
  const auto payload = bytes.subspan(kPreambleBytes + header_len);

  Checkpoint ckpt;
  try {
    const auto declared = header.at("payload_bytes").get<std::size_t>();
    if (payload.size() < declared) {
      throw CheckpointError(Kind::kTruncated, "checkpoint: payload has " +
                                                  std::to_string(payload.size()) +
                                                  " bytes, header declares " +
                                                  std::to_string(declared));
    }
    if (payload.size() > declared) {
      format_error("trailing bytes after payload");
    }
    if (sha256_hex(payload) != header.at("payload_sha256").get<std::string>()) {
      throw CheckpointError(Kind::kHashMismatch, "checkpoint: payload hash mismatch");
    }

    const auto& meta = header.at("metadata");
    ckpt.metadata.lineage = meta.at("lineage").get<std::vector<std::string>>();
    ckpt.metadata.training_seed = meta.at("training_seed").get<std::uint64_t>();
    ckpt.metadata.attributes = meta.at("attributes").get<std::map<std::string, std::string>>();
    if (meta.contains("provenance")) {
      ckpt.metadata.provenance_json = meta.at("provenance").dump();
    }

    const auto kind = header.at("kind").get<std::string>();
    if (kind == "base") {
      BaseModel base;
      base.dims.vocab_size = meta.at("dims").at("vocab_size").get<std::size_t>();
      base.dims.dim = meta.at("dims").at("dim").get<std::size_t>();
      base.dims.max_seq_len = meta.at("dims").at("max_seq_len").get<std::size_t>();
      base.item_embeddings = read_tensor(header, "item_embeddings", payload);
      for (Layer layer : kAllLayers) {
        base.weight(layer) = read_tensor(header, layer_name(layer), payload);
      }
      ckpt.content = std::move(base);
    } else if (kind == "lora") {
      LoraAdapter lora;
      lora.rank = meta.at("rank").get<std::size_t>();
      lora.alpha = meta.at("alpha").get<double>();
      lora.dropout = meta.at("dropout").get<double>();
      for (Layer layer : kAllLayers) {
        lora[layer].b = read_tensor(header, std::string(layer_name(layer)) + ".B", payload);
        lora[layer].a = read_tensor(header, std::string(layer_name(layer)) + ".A", payload);
      }
      ckpt.content = std::move(lora);
    } else if (kind == "dense") {
      DenseDelta dense;
      for (Layer layer : kAllLayers) {
        dense[layer] = read_tensor(header, std::string(layer_name(layer)) + ".delta", payload);
      }
      ckpt.content = std::move(dense);
    } else {
      format_error("unknown kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    format_error(std::string("malformed header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointContent& content,
                     const CheckpointMetadata& metadata) {
  const auto bytes = encode_checkpoint(content, metadata);
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw CheckpointError(Kind::kIo, "cannot write " + tmp.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw CheckpointError(Kind::kIo, "write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError(Kind::kIo, "cannot open checkpoint " + path.string());
  }
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::as_bytes(std::span<const char>(raw)));
}

namespace {

template <typename T>
T load_as(const std::filesystem::path& path, const char* expected) {
  auto ckpt = load_checkpoint(path);
  if (auto* value = std::get_if<T>(&ckpt.content)) {
    return std::move(*value);
  }
  throw CheckpointError(Kind::kFormat,
                        path.string() + " does not hold a " + std::string(expected) + " checkpoint");
}

}  // namespace

BaseModel load_base_model(const std::filesystem::path& path) {
  return load_as<BaseModel>(path, "base");
}

LoraAdapter load_lora_adapter(const std::filesystem::path& path) {
  return load_as<LoraAdapter>(path, "lora");
}

DenseDelta load_dense_delta(const std::filesystem::path& path) {
  return load_as<DenseDelta>(path, "dense");
}

std::string checkpoint_hash(const CheckpointContent& content, const CheckpointMetadata& metadata) {
  return sha256_hex(encode_checkpoint(content, metadata));
}

}  // namespace weaverec
