// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace selafd {

/// Flat key=value file with optional [section] headers. Keys are stored
/// as "section.key" ("key" before any header). '#' and ';' start comment
/// lines. A repeated key throws ConfigError.
class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text);
  /// Throws IoError when the file cannot be read.
  static ConfigFile load(const std::string& path);

  void set(std::string key, std::string value);
  bool has(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;

  /// Typed getters: nullopt when absent, ConfigError naming the key when
  /// the value does not parse.
  std::optional<double> get_double(std::string_view key) const;
  std::optional<std::uint64_t> get_u64(std::string_view key) const;
  std::optional<bool> get_bool(std::string_view key) const;

  /// Keys not listed in `known`.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;
  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace selafd
