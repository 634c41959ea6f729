// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "weaverec/dataset.hpp"
#include "weaverec/matrix.hpp"
#include "weaverec/rng.hpp"

namespace weaverec {

/// Linear maps of the recommender that carry LoRA factors.
enum class Layer : std::size_t { kQuery = 0, kKey, kValue, kOutput, kReadout };

inline constexpr std::size_t kLayerCount = 5;
inline constexpr std::array<Layer, kLayerCount> kAllLayers{
    Layer::kQuery, Layer::kKey, Layer::kValue, Layer::kOutput, Layer::kReadout};

constexpr std::size_t layer_index(Layer layer) noexcept { return static_cast<std::size_t>(layer); }
/// "q", "k", "v", "o", "out".
std::string_view layer_name(Layer layer) noexcept;

struct ModelDims {
  std::size_t vocab_size = 0;
  std::size_t dim = 32;
  std::size_t max_seq_len = 10;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Frozen single-head, single-layer causal attention recommender.
///
///   q = Wq e_n,  k_t = Wk e_t,  v_t = Wv e_t          (e_t = item embedding)
///   h = e_n + Wo * sum_t softmax_t(q.k_t / sqrt(d)) v_t
///   logits = Wout h
///
/// Only the last position is read out, so the causal mask is implicit.
struct BaseModel {
  ModelDims dims;
  Matrix item_embeddings;                    // vocab x dim
  std::array<Matrix, kLayerCount> weights;  // q, k, v, o: dim x dim; out: vocab x dim

  static BaseModel initialize(const ModelDims& dims, RngStream& rng);

  const Matrix& weight(Layer layer) const { return weights[layer_index(layer)]; }
  Matrix& weight(Layer layer) { return weights[layer_index(layer)]; }
  std::size_t parameter_count() const;
};

struct LoraConfig {
  std::size_t rank = 4;
  double alpha = 8.0;
  double dropout = 0.05;
  double init_sigma = 0.02;
};

/// b: d_out x r, a: r x d_in.
struct LoraFactors {
  Matrix b;
  Matrix a;

  friend bool operator==(const LoraFactors&, const LoraFactors&) = default;
};

/// Low-rank update of every adapted layer: W -> W + (alpha / rank) B A.
struct LoraAdapter {
  std::array<LoraFactors, kLayerCount> layers;
  std::size_t rank = 0;
  double alpha = 0.0;
  double dropout = 0.0;

  double scale() const { return alpha / static_cast<double>(rank); }
  LoraFactors& operator[](Layer layer) { return layers[layer_index(layer)]; }
  const LoraFactors& operator[](Layer layer) const { return layers[layer_index(layer)]; }

  std::size_t parameter_count() const;
  /// Layer order, B before A, row-major.
  Vector flatten() const;
  void assign(std::span<const double> flat);
  /// Same shapes and metadata, all factors zero.
  static LoraAdapter zeros_like(const LoraAdapter& other);

  friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;
};

/// A ~ N(0, init_sigma^2), B = 0, so the adapted model starts equal to the base.
LoraAdapter init_adapter(const BaseModel& base, const LoraConfig& config, RngStream& rng);

/// Throws ShapeError unless every factor conforms to its base layer.
void check_compatible(const BaseModel& base, const LoraAdapter& adapter);

/// Materialized per-layer weight updates (task vector).
struct DenseDelta {
  std::array<Matrix, kLayerCount> layers;

  Matrix& operator[](Layer layer) { return layers[layer_index(layer)]; }
  const Matrix& operator[](Layer layer) const { return layers[layer_index(layer)]; }
  std::size_t parameter_count() const;
  static DenseDelta zeros_like(const BaseModel& base);

  friend bool operator==(const DenseDelta&, const DenseDelta&) = default;
};

void check_compatible(const BaseModel& base, const DenseDelta& delta);

/// Non-owning reference to whatever adapts the base: nothing, LoRA factors,
/// or a dense delta.
class AdapterView {
 public:
  AdapterView() = default;
  AdapterView(const LoraAdapter& adapter) : ref_(&adapter) {}  // NOLINT(google-explicit-constructor)
  AdapterView(const DenseDelta& delta) : ref_(&delta) {}       // NOLINT(google-explicit-constructor)

  const LoraAdapter* lora() const {
    auto* p = std::get_if<const LoraAdapter*>(&ref_);
    return p ? *p : nullptr;
  }
  const DenseDelta* dense() const {
    auto* p = std::get_if<const DenseDelta*>(&ref_);
    return p ? *p : nullptr;
  }

 private:
  std::variant<std::monostate, const LoraAdapter*, const DenseDelta*> ref_;
};

/// W x + scale * B (A x).
Vector lora_linear(const Matrix& w, const Matrix& b, const Matrix& a, double scale,
                   std::span<const double> x);

/// Next-item logits over the whole vocabulary. Throws ModelError for an
/// empty or over-long prefix or an unknown item.
Vector forward(const BaseModel& base, AdapterView adapter, std::span<const ItemId> prefix);

/// The most recent `max_len` items of `sequence`.
std::vector<ItemId> recent_items(std::span<const ItemId> sequence, std::size_t max_len);

/// Mean next-item cross-entropy over the batch.
double mean_nll(const BaseModel& base, AdapterView adapter,
                std::span<const TrainingExample> batch);

struct AdapterLossAndGrads {
  double loss = 0.0;
  LoraAdapter grads;  // same shapes as the adapter
};

/// Mean cross-entropy and its gradient with respect to the adapter factors
/// only. With `dropout_rng` set and a positive adapter dropout, the LoRA
/// branch input is dropped out (inverted scaling).
AdapterLossAndGrads loss_and_grads(const BaseModel& base, const LoraAdapter& adapter,
                                   std::span<const TrainingExample> batch,
                                   RngStream* dropout_rng = nullptr);

struct BaseLossAndGrads {
  double loss = 0.0;
  BaseModel grads;
};

/// Mean cross-entropy and gradients for every base parameter (pretraining).
BaseLossAndGrads base_loss_and_grads(const BaseModel& base, std::span<const TrainingExample> batch);

}  // namespace weaverec
