// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace htseq {

/// Flat key-value document.
///
/// One `key = value` pair per line; `#` starts a comment; blank lines are
/// ignored. Keys keep their file order. Values are stored as text and typed on
/// access, so the same document serves schemas, experiment configs and model
/// metadata. Lists are comma separated.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(std::string_view text);
  static KvConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Inserts or replaces; replacement keeps the original position.
  void set(std::string key, std::string value);
  bool contains(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;

  std::string get_string(std::string_view key) const;
  std::string get_string(std::string_view key, std::string fallback) const;
  std::int64_t get_int(std::string_view key) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  double get_double(std::string_view key) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<double> get_doubles(std::string_view key, std::vector<double> fallback) const;
  std::vector<std::int64_t> get_ints(std::string_view key, std::vector<std::int64_t> fallback) const;
  std::vector<std::string> get_strings(std::string_view key, std::vector<std::string> fallback) const;

  /// Merges `other` on top of this document.
  void merge(const KvConfig& other);

  /// Canonical text: `key = value` lines in insertion order.
  std::string to_string() const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::int64_t parse_int(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);
std::vector<std::string> split_list(std::string_view text);

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double value);

}  // namespace htseq
