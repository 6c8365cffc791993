// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/masks.hpp"

#include <algorithm>

#include "htseq/error.hpp"

namespace htseq {

std::size_t TokenLayout::non_pad_length() const {
  return static_cast<std::size_t>(std::count_if(tags.begin(), tags.end(), [](TokenTag t) { return t != TokenTag::Pad; }));
}

std::size_t TokenLayout::history_count() const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), TokenTag::History));
}

TokenLayout TokenLayout::from_string(std::string_view text) {
  TokenLayout layout;
  std::int64_t next_event = 0;
  double last_time = 0.0;
  for (char c : text) {
    switch (c) {
      case 'E':
        layout.tags.push_back(TokenTag::Event);
        layout.event_index.push_back(next_event);
        last_time = static_cast<double>(next_event++);
        layout.timestamps.push_back(last_time);
        break;
      case 'H':
        layout.tags.push_back(TokenTag::History);
        layout.event_index.push_back(-1);
        layout.timestamps.push_back(last_time);
        break;
      case 'P':
        layout.tags.push_back(TokenTag::Pad);
        layout.event_index.push_back(-1);
        layout.timestamps.push_back(0.0);
        break;
      default:
        throw ConfigError(std::string("layout tags must be E, H or P, got '") + c + "'");
    }
  }
  layout.validate();
  return layout;
}

std::string TokenLayout::to_string() const {
  std::string out;
  for (auto t : tags) out += t == TokenTag::Event ? 'E' : (t == TokenTag::History ? 'H' : 'P');
  return out;
}

void TokenLayout::validate() const {
  if (event_index.size() != tags.size() || timestamps.size() != tags.size())
    throw ValidationError("token layout arrays differ in length");
  bool seen_pad = false;
  std::int64_t last_event = -1;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == TokenTag::Pad) {
      seen_pad = true;
      continue;
    }
    if (seen_pad) throw ValidationError("token layout has a non-pad token after padding at position " + std::to_string(i));
    if (tags[i] == TokenTag::Event) {
      if (event_index[i] <= last_event) throw ValidationError("token layout event indices must increase");
      last_event = event_index[i];
    }
  }
}

void TokenLayout::validate_inference() const {
  validate();
  const auto n = non_pad_length();
  if (history_count() != 1 || n == 0 || tags[n - 1] != TokenTag::History)
    throw ValidationError("inference layout needs exactly one History token as the last non-pad token");
}

HtSelection parse_selection(std::string_view text) {
  if (text == "last") return HtSelection::Last;
  if (text == "random") return HtSelection::Random;
  throw ConfigError("history token selection must be 'last' or 'random', got '" + std::string(text) + "'");
}

std::string_view to_string(HtSelection selection) { return selection == HtSelection::Last ? "last" : "random"; }

AttentionMask causal_mask(const TokenLayout& layout) {
  layout.validate();
  if (layout.history_count() != 0) throw ValidationError("causal_mask: layout contains History tokens; use ht_mask");
  const auto n = layout.size();
  AttentionMask mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (layout.tags[i] == TokenTag::Pad) continue;
    for (std::size_t j = 0; j <= i; ++j)
      if (layout.tags[j] != TokenTag::Pad) mask.set(i, j, true);
  }
  return mask;
}

AttentionMask ht_mask(const TokenLayout& layout, HtSelection selection, Rng& rng) {
  layout.validate();
  if (layout.history_count() == 0)
    throw ValidationError("ht_mask: layout has no History tokens; use causal_mask for plain causal attention");
  const auto n = layout.size();
  AttentionMask mask(n);
  std::vector<std::size_t> history;  // History positions seen so far
  for (std::size_t i = 0; i < n; ++i) {
    const auto tag = layout.tags[i];
    if (tag == TokenTag::Pad) continue;
    if (tag == TokenTag::History) {
      for (std::size_t j = 0; j < i; ++j)
        if (layout.tags[j] == TokenTag::Event) mask.set(i, j, true);
      mask.set(i, i, true);
      history.push_back(i);
      continue;
    }
    if (history.empty()) {
      for (std::size_t j = 0; j <= i; ++j)
        if (layout.tags[j] == TokenTag::Event) mask.set(i, j, true);
      continue;
    }
    const auto last = history.back();
    for (std::size_t j = last + 1; j <= i; ++j)
      if (layout.tags[j] == TokenTag::Event) mask.set(i, j, true);
    std::size_t chosen = last;
    if (selection == HtSelection::Random && history.size() > 1)
      chosen = history[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(history.size()) - 1))];
    mask.set(i, chosen, true);
  }
  return mask;
}

ReachabilityReport bottleneck_reachability(const AttentionMask& mask, const TokenLayout& layout) {
  ReachabilityReport report;
  const auto n = layout.size();
  if (n == 0) return report;
  if (mask.size() != n) throw ShapeError("reachability: mask and layout sizes differ");
  std::vector<std::uint8_t> seen(n);
  std::vector<std::size_t> stack;
  std::int64_t last_history = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (layout.tags[i] == TokenTag::History) last_history = static_cast<std::int64_t>(i);
    if (layout.tags[i] != TokenTag::Event || last_history < 0) continue;
    // Walk attention edges backwards from i through Event nodes only.
    std::fill(seen.begin(), seen.end(), 0);
    stack.assign(1, i);
    seen[i] = 1;
    while (!stack.empty()) {
      const auto node = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        if (seen[j] || !mask.at(node, j) || layout.tags[j] != TokenTag::Event) continue;
        seen[j] = 1;
        stack.push_back(j);
      }
    }
    for (std::size_t j = 0; j < static_cast<std::size_t>(last_history); ++j)
      if (seen[j] && layout.tags[j] == TokenTag::Event) report.violations.emplace_back(j, i);
  }
  return report;
}

MaskInvariantReport check_mask_invariants(const AttentionMask& mask, const TokenLayout& layout) {
  MaskInvariantReport r;
  const auto n = layout.size();
  if (mask.size() != n) throw ShapeError("mask and layout sizes differ");
  bool history_seen = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ti = layout.tags[i];
    std::size_t history_cols = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask.at(i, j)) continue;
      const auto tj = layout.tags[j];
      if (j > i) ++r.future_edges;
      if (ti == TokenTag::Pad || tj == TokenTag::Pad) ++r.pad_edges;
      if (ti == TokenTag::History && tj == TokenTag::History && j != i) ++r.history_to_history;
      if (tj == TokenTag::History) ++history_cols;
    }
    if (ti != TokenTag::Pad && !mask.at(i, i)) ++r.missing_self;
    if (ti == TokenTag::Event && history_seen && history_cols != 1) ++r.bad_history_columns;
    if (ti == TokenTag::History) history_seen = true;
  }
  return r;
}

}  // namespace htseq
