// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/model.hpp"

#include <cmath>
#include <optional>

#include "weaverec/error.hpp"
#include "weaverec/numeric.hpp"

namespace weaverec {

std::string_view layer_name(Layer layer) noexcept {
  switch (layer) {
    case Layer::kQuery:
      return "q";
    case Layer::kKey:
      return "k";
    case Layer::kValue:
      return "v";
    case Layer::kOutput:
      return "o";
    case Layer::kReadout:
      return "out";
  }
  return "?";
}

namespace {

std::size_t layer_rows(const ModelDims& dims, Layer layer) {
  return layer == Layer::kReadout ? dims.vocab_size : dims.dim;
}

}  // namespace

BaseModel BaseModel::initialize(const ModelDims& dims, RngStream& rng) {
  if (dims.vocab_size == 0 || dims.dim == 0 || dims.max_seq_len == 0) {
    throw ModelError("BaseModel: vocab_size, dim and max_seq_len must be positive");
  }
  const double sigma = 1.0 / std::sqrt(static_cast<double>(dims.dim));
  BaseModel model;
  model.dims = dims;
  auto emb_rng = rng.split("embeddings");
  model.item_embeddings = gaussian_init(dims.vocab_size, dims.dim, sigma, emb_rng);
  for (Layer layer : kAllLayers) {
    auto layer_rng = rng.split(layer_name(layer));
    model.weight(layer) = gaussian_init(layer_rows(dims, layer), dims.dim, sigma, layer_rng);
  }
  return model;
}

std::size_t BaseModel::parameter_count() const {
  std::size_t n = item_embeddings.size();
  for (const auto& w : weights) {
    n += w.size();
  }
  return n;
}

std::size_t LoraAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const auto& f : layers) {
    n += f.b.size() + f.a.size();
  }
  return n;
}

Vector LoraAdapter::flatten() const {
  Vector flat;
  flat.reserve(parameter_count());
  for (const auto& f : layers) {
    flat.insert(flat.end(), f.b.data().begin(), f.b.data().end());
    flat.insert(flat.end(), f.a.data().begin(), f.a.data().end());
  }
  return flat;
}

void LoraAdapter::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("LoraAdapter::assign: expected " + std::to_string(parameter_count()) +
                     " values, got " + std::to_string(flat.size()));
  }
  std::size_t pos = 0;
  for (auto& f : layers) {
    for (Matrix* m : {&f.b, &f.a}) {
      auto dst = m->data();
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                flat.begin() + static_cast<std::ptrdiff_t>(pos + dst.size()), dst.begin());
      pos += dst.size();
    }
  }
}

LoraAdapter LoraAdapter::zeros_like(const LoraAdapter& other) {
  LoraAdapter out;
  out.rank = other.rank;
  out.alpha = other.alpha;
  out.dropout = other.dropout;
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    out.layers[i].b = Matrix(other.layers[i].b.rows(), other.layers[i].b.cols());
    out.layers[i].a = Matrix(other.layers[i].a.rows(), other.layers[i].a.cols());
  }
  return out;
}

LoraAdapter init_adapter(const BaseModel& base, const LoraConfig& config, RngStream& rng) {
  if (config.rank == 0) {
    throw ModelError("init_adapter: rank must be positive");
  }
  if (config.rank >= base.dims.dim) {
    throw ModelError("init_adapter: rank must be smaller than the model dimension");
  }
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
    throw ModelError("init_adapter: dropout must lie in [0, 1)");
  }
  LoraAdapter adapter;
  adapter.rank = config.rank;
  adapter.alpha = config.alpha;
  adapter.dropout = config.dropout;
  for (Layer layer : kAllLayers) {
    const Matrix& w = base.weight(layer);
    auto layer_rng = rng.split(layer_name(layer));
    adapter[layer].b = Matrix(w.rows(), config.rank);
    adapter[layer].a = gaussian_init(config.rank, w.cols(), config.init_sigma, layer_rng);
  }
  return adapter;
}

void check_compatible(const BaseModel& base, const LoraAdapter& adapter) {
  if (adapter.rank == 0) {
    throw ShapeError("adapter has rank 0");
  }
  for (Layer layer : kAllLayers) {
    const Matrix& w = base.weight(layer);
    const auto& f = adapter[layer];
    if (f.b.rows() != w.rows() || f.b.cols() != adapter.rank || f.a.rows() != adapter.rank ||
        f.a.cols() != w.cols()) {
      throw ShapeError("adapter layer " + std::string(layer_name(layer)) +
                       " does not conform to the base model");
    }
  }
}

std::size_t DenseDelta::parameter_count() const {
  std::size_t n = 0;
  for (const auto& m : layers) {
    n += m.size();
  }
  return n;
}

DenseDelta DenseDelta::zeros_like(const BaseModel& base) {
  DenseDelta delta;
  for (Layer layer : kAllLayers) {
    delta[layer] = Matrix(base.weight(layer).rows(), base.weight(layer).cols());
  }
  return delta;
}

void check_compatible(const BaseModel& base, const DenseDelta& delta) {
  for (Layer layer : kAllLayers) {
    if (!delta[layer].same_shape(base.weight(layer))) {
      throw ShapeError("dense delta layer " + std::string(layer_name(layer)) +
                       " does not conform to the base model");
    }
  }
}

Vector lora_linear(const Matrix& w, const Matrix& b, const Matrix& a, double scale,
                   std::span<const double> x) {
  if (b.cols() != a.rows() || b.rows() != w.rows() || a.cols() != w.cols()) {
    throw ShapeError("lora_linear: factor shapes do not conform to W");
  }
  auto y = matvec(w, x);
  const auto ax = matvec(a, x);
  const auto bax = matvec(b, ax);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] += scale * bax[i];
  }
  return y;
}

std::vector<ItemId> recent_items(std::span<const ItemId> sequence, std::size_t max_len) {
  const std::size_t begin = sequence.size() > max_len ? sequence.size() - max_len : 0;
  return {sequence.begin() + static_cast<std::ptrdiff_t>(begin), sequence.end()};
}

namespace {

// One (possibly adapted) linear map. Exactly one of lora / delta may be set.
struct LinearOp {
  const Matrix* w = nullptr;
  const LoraFactors* lora = nullptr;
  double scale = 0.0;
  const Matrix* delta = nullptr;
};

// Inputs remembered for the backward pass of one application.
struct LinearCache {
  Vector lora_in;  // LoRA branch input after dropout
  Vector ax;       // A * lora_in
  Vector mask;     // inverted-dropout multipliers, empty when unused
};

Vector apply(const LinearOp& op, std::span<const double> x, LinearCache* cache, double dropout,
             RngStream* rng) {
  auto y = matvec(*op.w, x);
  if (op.delta != nullptr) {
    const auto dy = matvec(*op.delta, x);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] += dy[i];
    }
  }
  if (op.lora != nullptr) {
    Vector in(x.begin(), x.end());
    Vector mask;
    if (rng != nullptr && dropout > 0.0) {
      mask.resize(in.size());
      const double keep = 1.0 / (1.0 - dropout);
      for (std::size_t i = 0; i < in.size(); ++i) {
        mask[i] = rng->bernoulli(dropout) ? 0.0 : keep;
        in[i] *= mask[i];
      }
    }
    auto ax = matvec(op.lora->a, in);
    const auto bax = matvec(op.lora->b, ax);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] += op.scale * bax[i];
    }
    if (cache != nullptr) {
      cache->lora_in = std::move(in);
      cache->ax = std::move(ax);
      cache->mask = std::move(mask);
    }
  }
  return y;
}

// Accumulates parameter gradients for upstream gradient `dy` and returns
// the input gradient when `want_dx` is set.
std::optional<Vector> backward(const LinearOp& op, std::span<const double> x,
                               const LinearCache& cache, std::span<const double> dy,
                               LoraFactors* lora_grad, Matrix* w_grad, bool want_dx) {
  if (w_grad != nullptr) {
    add_outer(*w_grad, 1.0, dy, x);
  }
  Vector g_r;  // scale * B^T dy
  if (op.lora != nullptr && (lora_grad != nullptr || want_dx)) {
    g_r = matvec_transposed(op.lora->b, dy);
    for (double& v : g_r) {
      v *= op.scale;
    }
    if (lora_grad != nullptr) {
      add_outer(lora_grad->b, op.scale, dy, cache.ax);
      add_outer(lora_grad->a, 1.0, g_r, cache.lora_in);
    }
  }
  if (!want_dx) {
    return std::nullopt;
  }
  auto dx = matvec_transposed(*op.w, dy);
  if (op.delta != nullptr) {
    const auto extra = matvec_transposed(*op.delta, dy);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += extra[i];
    }
  }
  if (op.lora != nullptr) {
    auto lora_dx = matvec_transposed(op.lora->a, g_r);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += cache.mask.empty() ? lora_dx[i] : lora_dx[i] * cache.mask[i];
    }
  }
  return dx;
}

class Network {
 public:
  Network(const BaseModel& base, AdapterView adapter) : base_(base) {
    const LoraAdapter* lora = adapter.lora();
    const DenseDelta* dense = adapter.dense();
    if (lora != nullptr) {
      check_compatible(base, *lora);
      dropout_ = lora->dropout;
    }
    if (dense != nullptr) {
      check_compatible(base, *dense);
    }
    for (Layer layer : kAllLayers) {
      auto& op = ops_[layer_index(layer)];
      op.w = &base.weight(layer);
      if (lora != nullptr) {
        op.lora = &(*lora)[layer];
        op.scale = lora->scale();
      }
      if (dense != nullptr) {
        op.delta = &(*dense)[layer];
      }
    }
  }

  struct Activations {
    std::vector<ItemId> prefix;
    Vector q;
    std::vector<Vector> keys;
    std::vector<Vector> values;
    Vector attn;
    Vector context;
    Vector hidden;
    Vector logits;
    LinearCache q_cache;
    std::vector<LinearCache> k_cache;
    std::vector<LinearCache> v_cache;
    LinearCache o_cache;
    LinearCache out_cache;
  };

  Activations run(std::span<const ItemId> prefix, RngStream* dropout_rng) const {
    validate_prefix(prefix);
    const std::size_t n = prefix.size();
    const std::size_t d = base_.dims.dim;
    Activations act;
    act.prefix.assign(prefix.begin(), prefix.end());
    const auto last = embedding(prefix.back());
    act.q = apply(op(Layer::kQuery), last, &act.q_cache, dropout_, dropout_rng);
    act.keys.resize(n);
    act.values.resize(n);
    act.k_cache.resize(n);
    act.v_cache.resize(n);
    Vector scores(n);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t t = 0; t < n; ++t) {
      const auto e = embedding(prefix[t]);
      act.keys[t] = apply(op(Layer::kKey), e, &act.k_cache[t], dropout_, dropout_rng);
      act.values[t] = apply(op(Layer::kValue), e, &act.v_cache[t], dropout_, dropout_rng);
      scores[t] = dot(act.q, act.keys[t]) * inv_sqrt_d;
    }
    act.attn = softmax(scores);
    act.context.assign(d, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < d; ++i) {
        act.context[i] += act.attn[t] * act.values[t][i];
      }
    }
    const auto o = apply(op(Layer::kOutput), act.context, &act.o_cache, dropout_, dropout_rng);
    act.hidden.assign(last.begin(), last.end());
    for (std::size_t i = 0; i < d; ++i) {
      act.hidden[i] += o[i];
    }
    act.logits = apply(op(Layer::kReadout), act.hidden, &act.out_cache, dropout_, dropout_rng);
    return act;
  }

  // Backpropagates weight * (-log softmax(logits)[target]). Returns the loss
  // term (unweighted).
  double backprop(const Activations& act, ItemId target, double weight, LoraAdapter* lora_grad,
                  BaseModel* base_grad) const {
    const std::size_t n = act.prefix.size();
    const std::size_t d = base_.dims.dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const bool want_base = base_grad != nullptr;

    auto dz = softmax(act.logits);
    const double loss = log_sum_exp(act.logits) - act.logits[target];
    dz[target] -= 1.0;
    for (double& v : dz) {
      v *= weight;
    }

    auto grad_lora = [&](Layer layer) -> LoraFactors* {
      return lora_grad != nullptr ? &(*lora_grad)[layer] : nullptr;
    };
    auto grad_w = [&](Layer layer) -> Matrix* {
      return want_base ? &base_grad->weight(layer) : nullptr;
    };

    const auto dh = *backward(op(Layer::kReadout), act.hidden, act.out_cache, dz,
                              grad_lora(Layer::kReadout), grad_w(Layer::kReadout), true);
    const auto dc = *backward(op(Layer::kOutput), act.context, act.o_cache, dh,
                              grad_lora(Layer::kOutput), grad_w(Layer::kOutput), true);

    Vector dp(n);
    double weighted = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      dp[t] = dot(dc, act.values[t]);
      weighted += act.attn[t] * dp[t];
    }
    Vector dq(d, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ds = act.attn[t] * (dp[t] - weighted) * inv_sqrt_d;
      Vector dk(d);
      Vector dv(d);
      for (std::size_t i = 0; i < d; ++i) {
        dq[i] += ds * act.keys[t][i];
        dk[i] = ds * act.q[i];
        dv[i] = act.attn[t] * dc[i];
      }
      const auto e = embedding(act.prefix[t]);
      auto dek = backward(op(Layer::kKey), e, act.k_cache[t], dk, grad_lora(Layer::kKey),
                          grad_w(Layer::kKey), want_base);
      auto dev = backward(op(Layer::kValue), e, act.v_cache[t], dv, grad_lora(Layer::kValue),
                          grad_w(Layer::kValue), want_base);
      if (want_base) {
        auto row = base_grad->item_embeddings.row(act.prefix[t]);
        for (std::size_t i = 0; i < d; ++i) {
          row[i] += (*dek)[i] + (*dev)[i];
        }
      }
    }
    const auto last = embedding(act.prefix.back());
    auto deq = backward(op(Layer::kQuery), last, act.q_cache, dq, grad_lora(Layer::kQuery),
                        grad_w(Layer::kQuery), want_base);
    if (want_base) {
      auto row = base_grad->item_embeddings.row(act.prefix.back());
      for (std::size_t i = 0; i < d; ++i) {
        row[i] += (*deq)[i] + dh[i];  // dh: residual path
      }
    }
    return loss;
  }

 private:
  const LinearOp& op(Layer layer) const { return ops_[layer_index(layer)]; }

  std::span<const double> embedding(ItemId item) const {
    return base_.item_embeddings.row(item);
  }

  void validate_prefix(std::span<const ItemId> prefix) const {
    if (prefix.empty()) {
      throw ModelError("forward: empty prefix");
    }
    if (prefix.size() > base_.dims.max_seq_len) {
      throw ModelError("forward: prefix of length " + std::to_string(prefix.size()) +
                       " exceeds max_seq_len " + std::to_string(base_.dims.max_seq_len));
    }
    for (ItemId item : prefix) {
      if (item >= base_.dims.vocab_size) {
        throw ModelError("forward: unknown item id " + std::to_string(item));
      }
    }
  }

  const BaseModel& base_;
  std::array<LinearOp, kLayerCount> ops_{};
  double dropout_ = 0.0;
};

void check_batch(std::span<const TrainingExample> batch, const BaseModel& base) {
  if (batch.empty()) {
    throw ModelError("empty batch");
  }
  for (const auto& ex : batch) {
    if (ex.target >= base.dims.vocab_size) {
      throw ModelError("unknown target item id " + std::to_string(ex.target));
    }
  }
}

BaseModel zero_grads_like(const BaseModel& base) {
  BaseModel g;
  g.dims = base.dims;
  g.item_embeddings = Matrix(base.item_embeddings.rows(), base.item_embeddings.cols());
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    g.weights[i] = Matrix(base.weights[i].rows(), base.weights[i].cols());
  }
  return g;
}

}  // namespace

Vector forward(const BaseModel& base, AdapterView adapter, std::span<const ItemId> prefix) {
  const Network net(base, adapter);
  auto logits = net.run(prefix, nullptr).logits;
  for (double z : logits) {
    if (!std::isfinite(z)) {
      throw NumericError("forward: non-finite logit");
    }
  }
  return logits;
}

double mean_nll(const BaseModel& base, AdapterView adapter,
                std::span<const TrainingExample> batch) {
  check_batch(batch, base);
  const Network net(base, adapter);
  double total = 0.0;
  for (const auto& ex : batch) {
    const auto logits = net.run(ex.prefix, nullptr).logits;
    total += log_sum_exp(logits) - logits[ex.target];
  }
  return total / static_cast<double>(batch.size());
}

AdapterLossAndGrads loss_and_grads(const BaseModel& base, const LoraAdapter& adapter,
                                   std::span<const TrainingExample> batch,
                                   RngStream* dropout_rng) {
  check_batch(batch, base);
  const Network net(base, adapter);
  AdapterLossAndGrads out;
  out.grads = LoraAdapter::zeros_like(adapter);
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const auto act = net.run(ex.prefix, dropout_rng);
    out.loss += weight * net.backprop(act, ex.target, weight, &out.grads, nullptr);
  }
  return out;
}

BaseLossAndGrads base_loss_and_grads(const BaseModel& base, std::span<const TrainingExample> batch) {
  check_batch(batch, base);
  const Network net(base, AdapterView{});
  BaseLossAndGrads out;
  out.grads = zero_grads_like(base);
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const auto act = net.run(ex.prefix, nullptr);
    out.loss += weight * net.backprop(act, ex.target, weight, nullptr, &out.grads);
  }
  return out;
}

}  // namespace weaverec
