// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/kvconfig.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "htseq/error.hpp"

namespace htseq {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return std::string(s.substr(1, s.size() - 2));
  return std::string(s);
}

}  // namespace

std::int64_t parse_int(std::string_view text, std::string_view what) {
  text = trim(text);
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError("expected integer for '" + std::string(what) + "', got '" + std::string(text) + "'");
  return value;
}

double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  // from_chars for double is available in libstdc++ 11.
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError("expected number for '" + std::string(what) + "', got '" + std::string(text) + "'");
  return value;
}

bool parse_bool(std::string_view text, std::string_view what) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("expected boolean for '" + std::string(what) + "', got '" + std::string(text) + "'");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto comma = text.find(',', start);
    auto piece = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    out.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

KvConfig KvConfig::parse(std::string_view text) {
  KvConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    auto line = trim(raw);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (cfg.contains(key)) throw ParseError("duplicate key '" + std::string(key) + "'", line_no);
    cfg.set(std::string(key), unquote(trim(line.substr(eq + 1))));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void KvConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_string();
}

void KvConfig::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

bool KvConfig::contains(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> KvConfig::find(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

std::string KvConfig::get_string(std::string_view key) const {
  auto v = find(key);
  if (!v) throw ConfigError("missing config key '" + std::string(key) + "'");
  return *v;
}

std::string KvConfig::get_string(std::string_view key, std::string fallback) const {
  auto v = find(key);
  return v ? *v : fallback;
}

std::int64_t KvConfig::get_int(std::string_view key) const { return parse_int(get_string(key), key); }

std::int64_t KvConfig::get_int(std::string_view key, std::int64_t fallback) const {
  auto v = find(key);
  return v ? parse_int(*v, key) : fallback;
}

double KvConfig::get_double(std::string_view key) const { return parse_double(get_string(key), key); }

double KvConfig::get_double(std::string_view key, double fallback) const {
  auto v = find(key);
  return v ? parse_double(*v, key) : fallback;
}

bool KvConfig::get_bool(std::string_view key) const { return parse_bool(get_string(key), key); }

bool KvConfig::get_bool(std::string_view key, bool fallback) const {
  auto v = find(key);
  return v ? parse_bool(*v, key) : fallback;
}

std::vector<double> KvConfig::get_doubles(std::string_view key, std::vector<double> fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& piece : split_list(*v)) out.push_back(parse_double(piece, key));
  return out;
}

std::vector<std::int64_t> KvConfig::get_ints(std::string_view key, std::vector<std::int64_t> fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::vector<std::int64_t> out;
  for (const auto& piece : split_list(*v)) out.push_back(parse_int(piece, key));
  return out;
}

std::vector<std::string> KvConfig::get_strings(std::string_view key, std::vector<std::string> fallback) const {
  auto v = find(key);
  return v ? split_list(*v) : fallback;
}

void KvConfig::merge(const KvConfig& other) {
  for (const auto& [k, v] : other.entries_) set(k, v);
}

std::string KvConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace htseq
