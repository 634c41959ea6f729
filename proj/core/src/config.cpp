// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "weaverec/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>

#include "weaverec/error.hpp"

namespace weaverec {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

ConfigMap ConfigMap::parse(std::istream& in, std::string_view origin) {
  ConfigMap map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) {
      line.erase(0, 3);
    }
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') {
        quoted = !quoted;
      } else if (line[i] == '#' && !quoted) {
        line.erase(i);
        break;
      }
    }
    const auto body = trim(line);
    if (body.empty()) {
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + std::string(body) + "'");
    }
    const auto key = trim(body.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
    }
    auto value = trim(body.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (map.contains(key)) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": duplicate key '" +
                        std::string(key) + "'");
    }
    map.set(std::string(key), std::string(value));
  }
  return map;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  return parse(in, path.string());
}

std::optional<std::string> ConfigMap::get(std::string_view key) const {
  const auto it = values_.find(std::string(key));
  if (it == values_.end()) {
    return std::nullopt;
  }
  touched_[it->first] = true;
  return it->second;
}

std::string ConfigMap::get_string(std::string_view key, std::string_view fallback) const {
  return get(key).value_or(std::string(fallback));
}

namespace {

template <typename T>
T parse_number(std::string_view key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + text +
                      "' as a number");
  }
  return value;
}

double parse_double(std::string_view key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) {
      throw std::invalid_argument(text);
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + text +
                      "' as a real number");
  }
}

}  // namespace

double ConfigMap::get_double(std::string_view key, double fallback) const {
  const auto v = get(key);
  return v ? parse_double(key, *v) : fallback;
}

std::uint64_t ConfigMap::get_u64(std::string_view key, std::uint64_t fallback) const {
  const auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

std::size_t ConfigMap::get_size(std::string_view key, std::size_t fallback) const {
  const auto v = get(key);
  return v ? parse_number<std::size_t>(key, *v) : fallback;
}

bool ConfigMap::get_bool(std::string_view key, bool fallback) const {
  const auto v = get(key);
  if (!v) {
    return fallback;
  }
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") {
    return true;
  }
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") {
    return false;
  }
  throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" + *v + "'");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece =
        trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                : comma - start));
    if (!piece.empty()) {
      out.emplace_back(piece);
    }
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

std::vector<std::string> ConfigMap::get_list(std::string_view key) const {
  const auto v = get(key);
  return v ? split_list(*v) : std::vector<std::string>{};
}

std::vector<double> ConfigMap::get_doubles(std::string_view key) const {
  std::vector<double> out;
  for (const auto& piece : get_list(key)) {
    out.push_back(parse_double(key, piece));
  }
  return out;
}

std::vector<std::string> ConfigMap::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) {
    if (!touched_.contains(key)) {
      out.push_back(key);
    }
  }
  return out;
}

}  // namespace weaverec
