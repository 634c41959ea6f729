// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/merge.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "weaverec/error.hpp"
#include "weaverec/numeric.hpp"

namespace weaverec {

std::string_view merge_mode_name(MergeMode mode) noexcept {
  return mode == MergeMode::kFactor ? "factor" : "product";
}

std::string_view merge_method_name(MergeMethod method) noexcept {
  switch (method) {
    case MergeMethod::kWeightAverage:
      return "weight-average";
    case MergeMethod::kTies:
      return "ties";
    case MergeMethod::kDareAverage:
      return "dare+average";
    case MergeMethod::kLego:
      return "lego";
    case MergeMethod::kLearned:
      return "learned";
  }
  return "?";
}

MergeMethod parse_merge_method(std::string_view name) {
  for (auto m : {MergeMethod::kWeightAverage, MergeMethod::kTies, MergeMethod::kDareAverage,
                 MergeMethod::kLego, MergeMethod::kLearned}) {
    if (merge_method_name(m) == name) {
      return m;
    }
  }
  throw ConfigError("unknown merge method '" + std::string(name) +
                    "' (expected weight-average, ties, dare+average, lego or learned)");
}

MergeMode parse_merge_mode(std::string_view name) {
  if (name == "factor") {
    return MergeMode::kFactor;
  }
  if (name == "product") {
    return MergeMode::kProduct;
  }
  throw ConfigError("unknown merge mode '" + std::string(name) + "' (expected factor or product)");
}

void check_lambdas(std::span<const double> lambdas, std::size_t expected_count) {
  if (lambdas.size() != expected_count) {
    throw MergeError("expected " + std::to_string(expected_count) + " merge coefficients, got " +
                     std::to_string(lambdas.size()));
  }
  double sum = 0.0;
  for (double l : lambdas) {
    if (!std::isfinite(l)) {
      throw MergeError("merge coefficients must be finite");
    }
    sum += l;
  }
  if (!(std::abs(sum - 1.0) < kLambdaSumTolerance)) {
    throw MergeError("merge coefficients must sum to 1 (got sum " + std::to_string(sum) +
                     ", off by " + std::to_string(sum - 1.0) + ")");
  }
}

std::vector<double> uniform_lambdas(std::size_t n) {
  if (n == 0) {
    throw MergeError("uniform_lambdas: need at least one input");
  }
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

namespace {

void require_same_layout(std::span<const LoraAdapter> adapters) {
  if (adapters.empty()) {
    throw MergeError("merge needs at least one adapter");
  }
  const auto& first = adapters.front();
  for (const auto& other : adapters.subspan(1)) {
    if (other.rank != first.rank || other.alpha != first.alpha) {
      throw MergeError("cannot merge adapters with different rank or alpha (rank " +
                       std::to_string(first.rank) + " vs " + std::to_string(other.rank) + ")");
    }
    for (Layer layer : kAllLayers) {
      if (!other[layer].b.same_shape(first[layer].b) ||
          !other[layer].a.same_shape(first[layer].a)) {
        throw MergeError("cannot merge adapters: layer " + std::string(layer_name(layer)) +
                         " shapes differ");
      }
    }
  }
}

void require_same_layout(std::span<const DenseDelta> deltas) {
  if (deltas.empty()) {
    throw MergeError("merge needs at least one delta");
  }
  for (const auto& other : deltas.subspan(1)) {
    for (Layer layer : kAllLayers) {
      if (!other[layer].same_shape(deltas.front()[layer])) {
        throw MergeError("cannot merge deltas: layer " + std::string(layer_name(layer)) +
                         " shapes differ");
      }
    }
  }
}

// The unchecked weighted factor sum shared by weight_average and the
// coefficient search (whose probes leave the simplex on purpose).
LoraAdapter combine_factors(std::span<const LoraAdapter> adapters,
                            std::span<const double> lambdas) {
  LoraAdapter out = LoraAdapter::zeros_like(adapters.front());
  bool first = true;
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    if (lambdas[i] == 0.0) {
      continue;
    }
    for (Layer layer : kAllLayers) {
      if (first) {
        out[layer].b = scaled(adapters[i][layer].b, lambdas[i]);
        out[layer].a = scaled(adapters[i][layer].a, lambdas[i]);
      } else {
        axpy_inplace(lambdas[i], adapters[i][layer].b, out[layer].b);
        axpy_inplace(lambdas[i], adapters[i][layer].a, out[layer].a);
      }
    }
    first = false;
  }
  return out;
}

std::size_t delta_size(const DenseDelta& delta) {
  std::size_t n = 0;
  for (const auto& m : delta.layers) {
    n += m.size();
  }
  return n;
}

Vector flatten_delta(const DenseDelta& delta) {
  Vector flat;
  flat.reserve(delta_size(delta));
  for (const auto& m : delta.layers) {
    flat.insert(flat.end(), m.data().begin(), m.data().end());
  }
  return flat;
}

DenseDelta unflatten_like(const DenseDelta& shape, std::span<const double> flat) {
  DenseDelta out = shape;
  std::size_t pos = 0;
  for (auto& m : out.layers) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), m.size(), m.data().begin());
    pos += m.size();
  }
  return out;
}

}  // namespace

LoraAdapter weight_average(std::span<const LoraAdapter> adapters,
                           std::span<const double> lambdas) {
  require_same_layout(adapters);
  check_lambdas(lambdas, adapters.size());
  return combine_factors(adapters, lambdas);
}

DenseDelta product_average(std::span<const LoraAdapter> adapters,
                           std::span<const double> lambdas) {
  require_same_layout(adapters);
  check_lambdas(lambdas, adapters.size());
  std::vector<DenseDelta> deltas;
  deltas.reserve(adapters.size());
  for (const auto& a : adapters) {
    deltas.push_back(to_task_vector(a));
  }
  return task_arithmetic(deltas, lambdas);
}

LoraAdapter pair_interpolate(const LoraAdapter& target, const LoraAdapter& hybrid, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw MergeError("interpolation weight alpha must lie in [0, 1], got " +
                     std::to_string(alpha));
  }
  const std::array<LoraAdapter, 2> pair{target, hybrid};
  const std::array<double, 2> lambdas{1.0 - alpha, alpha};
  return weight_average(pair, lambdas);
}

DenseDelta to_task_vector(const LoraAdapter& adapter) {
  DenseDelta out;
  for (Layer layer : kAllLayers) {
    out[layer] = scaled(matmul(adapter[layer].b, adapter[layer].a), adapter.scale());
  }
  return out;
}

DenseDelta task_arithmetic(std::span<const DenseDelta> deltas, std::span<const double> weights) {
  require_same_layout(deltas);
  if (weights.size() != deltas.size()) {
    throw MergeError("task_arithmetic: " + std::to_string(deltas.size()) + " deltas but " +
                     std::to_string(weights.size()) + " weights");
  }
  DenseDelta out;
  for (Layer layer : kAllLayers) {
    out[layer] = Matrix(deltas.front()[layer].rows(), deltas.front()[layer].cols());
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      axpy_inplace(weights[i], deltas[i][layer], out[layer]);
    }
  }
  return out;
}

DenseDelta ties_merge(std::span<const DenseDelta> deltas, double trim_fraction,
                      std::span<const double> lambdas) {
  require_same_layout(deltas);
  if (!(trim_fraction > 0.0 && trim_fraction <= 1.0)) {
    throw MergeError("ties_merge: trim fraction must lie in (0, 1]");
  }
  check_lambdas(lambdas, deltas.size());
  const std::size_t n = delta_size(deltas.front());
  const auto keep = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(trim_fraction * static_cast<double>(n) - 1e-9)));

  // Step 1: trim each task vector to its largest-magnitude coordinates.
  std::vector<Vector> trimmed;
  trimmed.reserve(deltas.size());
  for (const auto& delta : deltas) {
    auto flat = flatten_delta(delta);
    if (keep < n) {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                       [&](std::size_t a, std::size_t b) {
                         const double ma = std::abs(flat[a]);
                         const double mb = std::abs(flat[b]);
                         return ma != mb ? ma > mb : a < b;
                       });
      for (auto it = idx.begin() + static_cast<std::ptrdiff_t>(keep); it != idx.end(); ++it) {
        flat[*it] = 0.0;
      }
    }
    trimmed.push_back(std::move(flat));
  }

  // Steps 2 and 3: elect a sign per coordinate, then average the agreeing
  // survivors.
  Vector merged(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double weighted = 0.0;
    for (std::size_t i = 0; i < trimmed.size(); ++i) {
      weighted += lambdas[i] * trimmed[i][j];
    }
    if (weighted == 0.0) {
      continue;
    }
    const bool positive = weighted > 0.0;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& t : trimmed) {
      if (t[j] != 0.0 && (t[j] > 0.0) == positive) {
        sum += t[j];
        ++count;
      }
    }
    merged[j] = count > 0 ? sum / static_cast<double>(count) : 0.0;
  }
  return unflatten_like(deltas.front(), merged);
}

DenseDelta dare(const DenseDelta& delta, double drop_prob, RngStream& rng) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw MergeError("dare: drop probability must lie in [0, 1), got " +
                     std::to_string(drop_prob));
  }
  DenseDelta out = delta;
  if (drop_prob == 0.0) {
    return out;
  }
  const double rescale = 1.0 / (1.0 - drop_prob);
  for (auto& m : out.layers) {
    for (double& x : m.data()) {
      x = rng.bernoulli(drop_prob) ? 0.0 : x * rescale;
    }
  }
  return out;
}

DenseDelta dare_average(std::span<const DenseDelta> deltas, double drop_prob,
                        std::span<const double> lambdas, const RngStream& rng) {
  require_same_layout(deltas);
  check_lambdas(lambdas, deltas.size());
  std::vector<DenseDelta> dropped;
  dropped.reserve(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    auto sub = rng.split(i);
    dropped.push_back(dare(deltas[i], drop_prob, sub));
  }
  return task_arithmetic(dropped, lambdas);
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// k-means++ seeding followed by Lloyd iterations. Returns the assignment.
std::vector<std::size_t> kmeans(const std::vector<Vector>& points, std::size_t k,
                                RngStream& rng) {
  const std::size_t n = points.size();
  std::vector<Vector> centroids;
  centroids.push_back(points[rng.uniform_index(n)]);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points[i], centroids.back()));
      total += nearest[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (nearest[i] <= 0.0) {
          continue;
        }
        if (u < nearest[i]) {
          pick = i;
          break;
        }
        u -= nearest[i];
      }
      // Guard against rounding leaving u just above the last weight.
      while (nearest[pick] <= 0.0 && pick > 0) {
        --pick;
      }
    } else {
      pick = static_cast<std::size_t>(rng.uniform_index(n));
    }
    centroids.push_back(points[pick]);
  }

  std::vector<std::size_t> assign(n, 0);
  constexpr std::size_t kMaxIterations = 100;
  for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(points[i], centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(points[i], centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    // Recompute means; an empty cluster takes over the worst-fit point.
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) {
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] <= 1) {
          continue;
        }
        const double d = squared_distance(points[i], centroids[assign[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      changed = true;
    }
    for (std::size_t c = 0; c < k; ++c) {
      Vector mean(points.front().size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == c) {
          for (std::size_t j = 0; j < mean.size(); ++j) {
            mean[j] += points[i][j];
          }
        }
      }
      for (double& x : mean) {
        x /= static_cast<double>(counts[c]);
      }
      centroids[c] = std::move(mean);
    }
    if (!changed) {
      break;
    }
  }
  return assign;
}

}  // namespace

LoraAdapter lego_merge(std::span<const LoraAdapter> adapters, std::size_t k, RngStream& rng) {
  require_same_layout(adapters);
  const auto& first = adapters.front();
  const std::size_t pooled = first.rank * adapters.size();
  if (k == 0 || k > pooled) {
    throw MergeError("lego_merge: target rank " + std::to_string(k) + " must lie in [1, " +
                     std::to_string(pooled) + "]");
  }
  const double scale = first.scale();
  LoraAdapter out;
  out.rank = k;
  out.alpha = scale * static_cast<double>(k);
  out.dropout = first.dropout;

  for (Layer layer : kAllLayers) {
    const std::size_t rows = first[layer].b.rows();
    const std::size_t cols = first[layer].a.cols();
    // Unit j carries the full delta contribution scale * b_j a_j as the pair
    // (scale * |a_j| * b_j, a_j / |a_j|), sign-fixed so it has one encoding.
    std::vector<Vector> units;
    units.reserve(pooled);
    for (const auto& adapter : adapters) {
      const auto& f = adapter[layer];
      for (std::size_t j = 0; j < adapter.rank; ++j) {
        Vector unit(rows + cols, 0.0);
        const auto a_row = f.a.row(j);
        const double na = norm2(a_row);
        if (na > 0.0) {
          std::size_t lead = 0;
          for (std::size_t c = 1; c < cols; ++c) {
            if (std::abs(a_row[c]) > std::abs(a_row[lead])) {
              lead = c;
            }
          }
          const double sign = a_row[lead] < 0.0 ? -1.0 : 1.0;
          for (std::size_t r = 0; r < rows; ++r) {
            unit[r] = sign * scale * na * f.b(r, j);
          }
          for (std::size_t c = 0; c < cols; ++c) {
            unit[rows + c] = sign * a_row[c] / na;
          }
        }
        units.push_back(std::move(unit));
      }
    }
    auto layer_rng = rng.split(layer_name(layer));
    const auto assign = kmeans(units, k, layer_rng);

    Matrix b(rows, k);
    Matrix a(k, cols);
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t count = 0;
      Vector mean(rows + cols, 0.0);
      for (std::size_t i = 0; i < units.size(); ++i) {
        if (assign[i] == c) {
          ++count;
          for (std::size_t j = 0; j < mean.size(); ++j) {
            mean[j] += units[i][j];
          }
        }
      }
      for (std::size_t r = 0; r < rows; ++r) {
        b(r, c) = mean[r] / static_cast<double>(count) / scale;
      }
      for (std::size_t col = 0; col < cols; ++col) {
        a(c, col) = mean[rows + col] / static_cast<double>(count);
      }
    }
    out[layer] = {std::move(b), std::move(a)};
  }
  return out;
}

double mean_prediction_entropy(const BaseModel& base, AdapterView adapter,
                               std::span<const std::vector<ItemId>> prefixes,
                               std::span<const ItemId> restrict_to) {
  if (prefixes.empty()) {
    throw MergeError("entropy needs at least one unlabeled prefix");
  }
  double total = 0.0;
  Vector subset(restrict_to.size());
  for (const auto& prefix : prefixes) {
    const auto logits = forward(base, adapter, recent_items(prefix, base.dims.max_seq_len));
    if (restrict_to.empty()) {
      total += softmax_entropy(logits);
    } else {
      for (std::size_t i = 0; i < restrict_to.size(); ++i) {
        subset[i] = logits.at(restrict_to[i]);
      }
      total += softmax_entropy(subset);
    }
  }
  return total / static_cast<double>(prefixes.size());
}

LearnedLambdas learn_lambdas(const BaseModel& base, std::span<const LoraAdapter> adapters,
                             std::span<const std::vector<ItemId>> prefixes,
                             const LearnLambdasConfig& config) {
  require_same_layout(adapters);
  if (prefixes.empty()) {
    throw MergeError("learn_lambdas: need at least one unlabeled prefix");
  }
  const std::size_t n = adapters.size();
  const auto objective = [&](std::span<const double> lambdas) {
    const auto merged = combine_factors(adapters, lambdas);
    return mean_prediction_entropy(base, merged, prefixes, config.restrict_to);
  };

  LearnedLambdas result;
  auto lambdas = uniform_lambdas(n);
  double current = objective(lambdas);
  result.initial_entropy = current;
  result.lambdas = lambdas;
  result.entropy = current;
  result.entropy_trace.push_back(current);
  if (n == 1) {
    return result;
  }
  for (std::size_t step = 0; step < config.steps; ++step) {
    auto grad = finite_diff_grad(objective, lambdas, config.fd_epsilon);
    // Only movement along the simplex matters; drop the normal component.
    const double mean = std::accumulate(grad.begin(), grad.end(), 0.0) / static_cast<double>(n);
    for (double& g : grad) {
      g -= mean;
    }
    if (norm2(grad) < 1e-12) {
      break;
    }
    Vector proposal(n);
    for (std::size_t i = 0; i < n; ++i) {
      proposal[i] = lambdas[i] - config.step_size * grad[i];
    }
    lambdas = project_to_simplex(proposal);
    current = objective(lambdas);
    result.entropy_trace.push_back(current);
    if (current < result.entropy) {
      result.entropy = current;
      result.lambdas = lambdas;
    }
  }
  return result;
}

std::vector<std::vector<double>> simplex_grid(std::size_t n, double resolution) {
  if (n == 0) {
    throw MergeError("simplex_grid: need at least one coordinate");
  }
  if (!(resolution > 0.0 && resolution <= 1.0)) {
    throw MergeError("simplex_grid: resolution must lie in (0, 1]");
  }
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / resolution));
  if (std::abs(static_cast<double>(steps) * resolution - 1.0) > 1e-9) {
    throw MergeError("simplex_grid: 1/resolution must be an integer");
  }
  std::vector<std::vector<double>> grid;
  std::vector<std::size_t> counts(n, 0);
  // Enumerate compositions of `steps` into n non-negative parts.
  const auto recurse = [&](auto&& self, std::size_t pos, std::size_t remaining) -> void {
    if (pos + 1 == n) {
      counts[pos] = remaining;
      std::vector<double> lambdas(n);
      double used = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        lambdas[i] = static_cast<double>(counts[i]) / static_cast<double>(steps);
        used += lambdas[i];
      }
      lambdas[n - 1] = 1.0 - used;
      grid.push_back(std::move(lambdas));
      return;
    }
    for (std::size_t c = 0; c <= remaining; ++c) {
      counts[pos] = c;
      self(self, pos + 1, remaining - c);
    }
  };
  recurse(recurse, 0, steps);
  return grid;
}

std::string merge_provenance_json(const MergeSpec& spec,
                                  std::span<const std::string> input_hashes,
                                  std::span<const std::string> input_labels) {
  if (input_hashes.size() != input_labels.size()) {
    throw MergeError("provenance: one label is required per input hash");
  }
  nlohmann::json inputs = nlohmann::json::array();
  for (std::size_t i = 0; i < input_hashes.size(); ++i) {
    inputs.push_back({{"label", input_labels[i]}, {"sha256", input_hashes[i]}});
  }
  nlohmann::json j{{"method", merge_method_name(spec.method)},
                   {"mode", merge_mode_name(spec.mode)},
                   {"lambdas", spec.lambdas},
                   {"inputs", std::move(inputs)},
                   {"seed", spec.seed}};
  if (spec.method == MergeMethod::kTies) {
    j["trim_fraction"] = spec.trim_fraction;
  }
  if (spec.method == MergeMethod::kDareAverage) {
    j["drop_prob"] = spec.drop_prob;
  }
  if (spec.method == MergeMethod::kLego) {
    j["lego_rank"] = spec.lego_rank;
  }
  return j.dump();
}

}  // namespace weaverec
