// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "htseq/kvconfig.hpp"
#include "htseq/masks.hpp"
#include "htseq/rng.hpp"
#include "htseq/seqdata.hpp"

namespace htseq {

enum class HtPlacement { Uniform, BiasEnd };

HtPlacement parse_placement(std::string_view text);
std::string_view to_string(HtPlacement placement);

/// History-token settings for pretraining.
struct HTConfig {
  bool enabled = true;  // false: plain causal next-token training
  double frequency = 0.1;
  double probability = 0.5;
  HtPlacement placement = HtPlacement::BiasEnd;
  HtSelection selection = HtSelection::Random;

  void validate() const;
  /// Keys: ht.enabled, ht.frequency, ht.probability, ht.placement, ht.selection.
  static HTConfig from_config(const KvConfig& cfg);
  void write_to(KvConfig& cfg) const;
};

/// Insertion point k places a History token right after event k (1-based).
struct HTPlan {
  std::vector<std::size_t> positions;  // strictly increasing, in [1, L]
  std::vector<double> timestamps;      // timestamp of event `positions[i]`
  bool empty() const { return positions.empty(); }
};

/// max(1, floor(f * L)).
std::size_t ht_count(std::size_t length, double frequency);

/// n distinct points uniform over {1..L}; L = timestamps.size().
HTPlan plan_uniform(std::span<const double> timestamps, std::size_t n, Rng& rng);

/// n distinct points uniform over {max(1, ceil(mean_len / 2))..L}, falling
/// back to {1..L} when that range holds fewer than n points.
HTPlan plan_bias_end(std::span<const double> timestamps, double mean_len, std::size_t n, Rng& rng);

/// One draw per batch: true with probability p.
bool should_apply(double p, Rng& rng);

/// Single History token after the last event.
HTPlan inference_plan(std::span<const double> timestamps);

/// Unpadded layout of one row with History tokens inserted per the plan.
TokenLayout apply_plan(std::span<const double> timestamps, const HTPlan& plan);

/// Batch rows with their augmented layouts, all padded to a common length.
struct AugmentedBatch {
  std::size_t max_length = 0;
  std::vector<TokenLayout> layouts;
};

/// `plans` holds one plan per row (empty plans leave rows causal).
AugmentedBatch apply_plans(const PaddedBatch& batch, const std::vector<HTPlan>& plans);

/// Rows without History tokens.
AugmentedBatch causal_layouts(const PaddedBatch& batch);

/// Each row followed by a single History token (embedding extraction layout).
AugmentedBatch inference_layouts(const PaddedBatch& batch);

/// Drops History and Pad positions, returning (event index, timestamp) pairs.
std::vector<std::pair<std::int64_t, double>> strip_history(const TokenLayout& layout);

/// Per-batch training plan: draws should_apply once, then one plan per row
/// sized by ht_count and placed per the config. Returns empty plans when the
/// batch is left causal.
std::vector<HTPlan> plan_batch(const PaddedBatch& batch, const HTConfig& config, Rng& rng);

/// causal_mask for rows without History tokens, ht_mask otherwise.
std::vector<AttentionMask> build_masks(const AugmentedBatch& batch, HtSelection selection, Rng& rng);

}  // namespace htseq
