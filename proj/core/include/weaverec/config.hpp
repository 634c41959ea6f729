// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace weaverec {

/// Flat key=value settings. Lines are `key = value`; `#` starts a comment
/// anywhere outside the value's quotes; blank lines are ignored.
class ConfigMap {
 public:
  static ConfigMap parse(std::istream& in, std::string_view origin = "<config>");
  static ConfigMap load(const std::filesystem::path& path);

  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }
  bool contains(std::string_view key) const { return values_.contains(std::string(key)); }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::optional<std::string> get(std::string_view key) const;
  std::string get_string(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  /// Comma-separated list; empty value gives an empty list.
  std::vector<std::string> get_list(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;

  /// Keys never read through a getter; callers use it to reject typos.
  std::vector<std::string> unused_keys() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> touched_;
};

std::vector<std::string> split_list(std::string_view text);

}  // namespace weaverec
