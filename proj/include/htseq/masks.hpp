// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "htseq/attention.hpp"
#include "htseq/rng.hpp"

namespace htseq {

enum class TokenTag : std::uint8_t { Event, History, Pad };

/// Per-position description of an augmented row.
struct TokenLayout {
  std::vector<TokenTag> tags;
  std::vector<std::int64_t> event_index;  // source event per Event tag, -1 otherwise
  std::vector<double> timestamps;

  std::size_t size() const { return tags.size(); }
  std::size_t non_pad_length() const;
  std::size_t history_count() const;

  /// Layout from a tag string such as "EEHEE" or "EEHPP" (E/H/P). Timestamps
  /// are the source event index; a History token copies its predecessor's.
  static TokenLayout from_string(std::string_view tags);
  std::string to_string() const;

  /// Pad tags only at the tail; array lengths agree; event indices increase.
  void validate() const;
  /// validate() plus exactly one History tag, the last non-pad token.
  void validate_inference() const;
};

enum class HtSelection { Last, Random };

HtSelection parse_selection(std::string_view text);
std::string_view to_string(HtSelection selection);

/// allow[i][j] = (j <= i) over non-pad tokens. Rejects History tags.
AttentionMask causal_mask(const TokenLayout& layout);

/// History-token mask.
///
/// A History row attends every earlier Event token and itself. An Event row
/// attends Event tokens after its most recent preceding History token up to
/// itself, plus exactly one preceding History token: the most recent (Last)
/// or a uniformly drawn one (Random). Event rows with no History token before
/// them attend causally. Pad rows and columns are empty.
AttentionMask ht_mask(const TokenLayout& layout, HtSelection selection, Rng& rng);

struct ReachabilityReport {
  /// (source event j, destination event i) pairs connected without crossing
  /// a History token although j lies before i's most recent History token.
  std::vector<std::pair<std::size_t, std::size_t>> violations;
  bool ok() const { return violations.empty(); }
};

/// Deletes History nodes from the attention digraph and searches for
/// event-to-event paths that bypass the bottleneck.
ReachabilityReport bottleneck_reachability(const AttentionMask& mask, const TokenLayout& layout);

struct MaskInvariantReport {
  std::size_t future_edges = 0;         // allow[i][j] with j > i
  std::size_t history_to_history = 0;   // History row attends another History token
  std::size_t pad_edges = 0;            // any edge touching a Pad row or column
  std::size_t missing_self = 0;         // non-pad row without self-attention
  std::size_t bad_history_columns = 0;  // Event row after a History token without exactly one History column
  bool ok() const {
    return future_edges + history_to_history + pad_edges + missing_self + bad_history_columns == 0;
  }
};

MaskInvariantReport check_mask_invariants(const AttentionMask& mask, const TokenLayout& layout);

}  // namespace htseq
