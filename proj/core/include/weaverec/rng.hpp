// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace weaverec {

/// Counter-based random stream.
///
/// Draw i of a stream is a pure function of (key, i), so sequences are
/// identical on every platform and `split` never perturbs the parent. A
/// stream is single-owner; hand parallel consumers their own split.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller (one variate per two uniforms).
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  bool bernoulli(double p);

  /// Independent substream derived from this stream's key and `name`.
  RngStream split(std::string_view name) const;
  RngStream split(std::uint64_t index) const;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

 private:
  RngStream(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_;
};

/// 64-bit FNV-1a, used to derive substream keys from names.
std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace weaverec
