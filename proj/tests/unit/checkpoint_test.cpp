// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "weaverec/checkpoint.hpp"
#include "weaverec/error.hpp"
#include "weaverec/model.hpp"
#include "weaverec/numeric.hpp"

namespace weaverec {
namespace {

using Kind = CheckpointError::Kind;

struct Fixture {
  BaseModel base;
  LoraAdapter adapter;
  CheckpointMetadata meta;
};

Fixture make_fixture() {
  RngStream rng(21);
  Fixture f;
  f.base = BaseModel::initialize({9, 4, 5}, rng);
  f.adapter = init_adapter(f.base, LoraConfig{2, 4.0, 0.05, 0.1}, rng);
  for (auto& layer : f.adapter.layers) {
    layer.b = gaussian_init(layer.b.rows(), layer.b.cols(), 0.5, rng);
  }
  f.meta.lineage = {"d0", "d1"};
  f.meta.training_seed = 77;
  f.meta.attributes = {{"role", "hybrid"}};
  return f;
}

Kind decode_failure(std::span<const std::byte> bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode unexpectedly succeeded";
  return Kind::kIo;
}

TEST(Checkpoint, LoraRoundTripIsExact) {
  const auto f = make_fixture();
  const auto ckpt = decode_checkpoint(encode_checkpoint(f.adapter, f.meta));
  EXPECT_EQ(std::get<LoraAdapter>(ckpt.content), f.adapter);
  EXPECT_EQ(ckpt.metadata, f.meta);
}

TEST(Checkpoint, BaseRoundTripIsBitExact) {
  const auto f = make_fixture();
  const auto ckpt = decode_checkpoint(encode_checkpoint(f.base, f.meta));
  const auto& base = std::get<BaseModel>(ckpt.content);
  EXPECT_EQ(base.dims, f.base.dims);
  EXPECT_TRUE(bit_equal(base.item_embeddings, f.base.item_embeddings));
  for (Layer l : kAllLayers) {
    EXPECT_TRUE(bit_equal(base.weight(l), f.base.weight(l)));
  }
}

TEST(Checkpoint, DenseRoundTripAndProvenance) {
  const auto f = make_fixture();
  auto delta = DenseDelta::zeros_like(f.base);
  delta[Layer::kValue](1, 2) = -0.0;
  delta[Layer::kReadout](3, 1) = 1.25;
  auto meta = f.meta;
  // Provenance is stored in canonical (sorted-key) form.
  meta.provenance_json = R"({"inputs":["a","b"],"method":"ties"})";
  const auto ckpt = decode_checkpoint(encode_checkpoint(delta, meta));
  const auto& out = std::get<DenseDelta>(ckpt.content);
  for (Layer l : kAllLayers) {
    EXPECT_TRUE(bit_equal(out[l], delta[l]));
  }
  EXPECT_EQ(ckpt.metadata.provenance_json, meta.provenance_json);
}

TEST(Checkpoint, EncodingIsDeterministic) {
  const auto f = make_fixture();
  EXPECT_EQ(encode_checkpoint(f.adapter, f.meta), encode_checkpoint(f.adapter, f.meta));
  EXPECT_EQ(checkpoint_hash(f.adapter, f.meta), checkpoint_hash(f.adapter, f.meta));
  auto other = f.adapter;
  other[Layer::kQuery].b(0, 0) += 1e-12;
  EXPECT_NE(checkpoint_hash(other, f.meta), checkpoint_hash(f.adapter, f.meta));
}

TEST(Checkpoint, TamperedPayloadFailsHash) {
  const auto f = make_fixture();
  auto bytes = encode_checkpoint(f.adapter, f.meta);
  bytes.back() ^= std::byte{0x01};
  EXPECT_EQ(decode_failure(bytes), Kind::kHashMismatch);
}

TEST(Checkpoint, BadMagicRejected) {
  const auto f = make_fixture();
  auto bytes = encode_checkpoint(f.adapter, f.meta);
  bytes[0] = std::byte{'X'};
  EXPECT_EQ(decode_failure(bytes), Kind::kBadMagic);
}

TEST(Checkpoint, VersionZeroRejected) {
  const auto f = make_fixture();
  auto bytes = encode_checkpoint(f.adapter, f.meta);
  bytes[4] = std::byte{0};
  bytes[5] = std::byte{0};
  EXPECT_EQ(decode_failure(bytes), Kind::kVersionMismatch);
}

TEST(Checkpoint, TruncationsAreDetected) {
  const auto f = make_fixture();
  const auto bytes = encode_checkpoint(f.adapter, f.meta);
  for (std::size_t keep : {std::size_t{6}, std::size_t{20}, bytes.size() - 8}) {
    EXPECT_EQ(decode_failure(std::span(bytes).first(keep)), Kind::kTruncated) << keep;
  }
}

TEST(Checkpoint, TrailingBytesRejected) {
  const auto f = make_fixture();
  auto bytes = encode_checkpoint(f.adapter, f.meta);
  bytes.push_back(std::byte{0});
  EXPECT_EQ(decode_failure(bytes), Kind::kFormat);
}

TEST(Checkpoint, FileRoundTripAndKindCheck) {
  const auto f = make_fixture();
  const auto dir = std::filesystem::temp_directory_path() / "weaverec_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "adapter.wvrc";
  save_checkpoint(path, f.adapter, f.meta);
  EXPECT_EQ(load_lora_adapter(path), f.adapter);
  try {
    load_base_model(path);
    FAIL() << "expected kind mismatch";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), Kind::kFormat);
  }
  try {
    load_checkpoint(dir / "missing.wvrc");
    FAIL() << "expected io error";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), Kind::kIo);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace weaverec
