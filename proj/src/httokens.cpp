// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/httokens.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "htseq/error.hpp"

namespace htseq {

HtPlacement parse_placement(std::string_view text) {
  if (text == "uniform") return HtPlacement::Uniform;
  if (text == "bias-end") return HtPlacement::BiasEnd;
  throw ConfigError("history token placement must be 'uniform' or 'bias-end', got '" + std::string(text) + "'");
}

std::string_view to_string(HtPlacement placement) {
  return placement == HtPlacement::Uniform ? "uniform" : "bias-end";
}

void HTConfig::validate() const {
  if (!(frequency >= 0.0)) throw ConfigError("ht.frequency must be >= 0");
  if (!(probability >= 0.0 && probability <= 1.0)) throw ConfigError("ht.probability must lie in [0, 1]");
}

HTConfig HTConfig::from_config(const KvConfig& cfg) {
  HTConfig c;
  c.enabled = cfg.get_bool("ht.enabled", c.enabled);
  c.frequency = cfg.get_double("ht.frequency", c.frequency);
  c.probability = cfg.get_double("ht.probability", c.probability);
  c.placement = parse_placement(cfg.get_string("ht.placement", std::string(to_string(c.placement))));
  c.selection = parse_selection(cfg.get_string("ht.selection", std::string(to_string(c.selection))));
  c.validate();
  return c;
}

void HTConfig::write_to(KvConfig& cfg) const {
  cfg.set("ht.enabled", enabled ? "true" : "false");
  cfg.set("ht.frequency", format_double(frequency));
  cfg.set("ht.probability", format_double(probability));
  cfg.set("ht.placement", std::string(to_string(placement)));
  cfg.set("ht.selection", std::string(to_string(selection)));
}

std::size_t ht_count(std::size_t length, double frequency) {
  // The small slack keeps products such as 0.1 * 30 from rounding down.
  const double raw = std::floor(frequency * static_cast<double>(length) + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::max(0.0, raw)));
}

namespace {

HTPlan sample_range(std::span<const double> timestamps, std::size_t lo, std::size_t hi, std::size_t n, Rng& rng) {
  std::vector<std::size_t> pool(hi - lo + 1);
  std::iota(pool.begin(), pool.end(), lo);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(pool.size()) - 1));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  HTPlan plan;
  plan.positions = std::move(pool);
  for (auto k : plan.positions) plan.timestamps.push_back(timestamps[k - 1]);
  return plan;
}

}  // namespace

HTPlan plan_uniform(std::span<const double> timestamps, std::size_t n, Rng& rng) {
  const auto length = timestamps.size();
  if (n < 1) throw ConfigError("plan_uniform: need at least one history token");
  if (n > length)
    throw ConfigError("plan_uniform: " + std::to_string(n) + " history tokens for " + std::to_string(length) + " events");
  return sample_range(timestamps, 1, length, n, rng);
}

HTPlan plan_bias_end(std::span<const double> timestamps, double mean_len, std::size_t n, Rng& rng) {
  const auto length = timestamps.size();
  if (n < 1) throw ConfigError("plan_bias_end: need at least one history token");
  if (n > length)
    throw ConfigError("plan_bias_end: " + std::to_string(n) + " history tokens for " + std::to_string(length) + " events");
  auto lo = static_cast<std::size_t>(std::max(1.0, std::ceil(mean_len / 2.0)));
  if (lo > length || length - lo + 1 < n) lo = 1;
  return sample_range(timestamps, lo, length, n, rng);
}

bool should_apply(double p, Rng& rng) { return rng.uniform01() < p; }

HTPlan inference_plan(std::span<const double> timestamps) {
  if (timestamps.empty()) throw ValidationError("inference_plan: sequence has no events");
  return HTPlan{{timestamps.size()}, {timestamps.back()}};
}

TokenLayout apply_plan(std::span<const double> timestamps, const HTPlan& plan) {
  const auto length = timestamps.size();
  for (auto k : plan.positions)
    if (k < 1 || k > length) throw ValidationError("history token position outside [1, L]");
  TokenLayout layout;
  std::size_t next = 0;
  for (std::size_t e = 0; e < length; ++e) {
    layout.tags.push_back(TokenTag::Event);
    layout.event_index.push_back(static_cast<std::int64_t>(e));
    layout.timestamps.push_back(timestamps[e]);
    while (next < plan.positions.size() && plan.positions[next] == e + 1) {
      layout.tags.push_back(TokenTag::History);
      layout.event_index.push_back(-1);
      layout.timestamps.push_back(timestamps[e]);
      ++next;
    }
  }
  return layout;
}

AugmentedBatch apply_plans(const PaddedBatch& batch, const std::vector<HTPlan>& plans) {
  if (plans.size() != batch.batch_size) throw ShapeError("apply_plans: one plan per batch row required");
  AugmentedBatch out;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    std::span<const double> ts(batch.timestamps.data() + batch.index(b, 0), batch.lengths[b]);
    out.layouts.push_back(apply_plan(ts, plans[b]));
    out.max_length = std::max(out.max_length, out.layouts.back().size());
  }
  for (auto& layout : out.layouts) {
    const auto pad = out.max_length - layout.size();
    layout.tags.insert(layout.tags.end(), pad, TokenTag::Pad);
    layout.event_index.insert(layout.event_index.end(), pad, -1);
    layout.timestamps.insert(layout.timestamps.end(), pad, 0.0);
  }
  return out;
}

AugmentedBatch causal_layouts(const PaddedBatch& batch) {
  return apply_plans(batch, std::vector<HTPlan>(batch.batch_size));
}

AugmentedBatch inference_layouts(const PaddedBatch& batch) {
  std::vector<HTPlan> plans;
  for (std::size_t b = 0; b < batch.batch_size; ++b)
    plans.push_back(inference_plan(std::span<const double>(batch.timestamps.data() + batch.index(b, 0), batch.lengths[b])));
  return apply_plans(batch, plans);
}

std::vector<std::pair<std::int64_t, double>> strip_history(const TokenLayout& layout) {
  std::vector<std::pair<std::int64_t, double>> out;
  for (std::size_t i = 0; i < layout.size(); ++i)
    if (layout.tags[i] == TokenTag::Event) out.emplace_back(layout.event_index[i], layout.timestamps[i]);
  return out;
}

std::vector<HTPlan> plan_batch(const PaddedBatch& batch, const HTConfig& config, Rng& rng) {
  std::vector<HTPlan> plans(batch.batch_size);
  if (!config.enabled || !should_apply(config.probability, rng)) return plans;
  double mean_len = 0.0;
  for (auto len : batch.lengths) mean_len += static_cast<double>(len);
  mean_len /= static_cast<double>(std::max<std::size_t>(1, batch.batch_size));
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    const auto len = batch.lengths[b];
    if (len == 0) continue;
    std::span<const double> ts(batch.timestamps.data() + batch.index(b, 0), len);
    const auto n = std::min(len, ht_count(len, config.frequency));
    plans[b] = config.placement == HtPlacement::Uniform ? plan_uniform(ts, n, rng)
                                                         : plan_bias_end(ts, mean_len, n, rng);
  }
  return plans;
}

std::vector<AttentionMask> build_masks(const AugmentedBatch& batch, HtSelection selection, Rng& rng) {
  std::vector<AttentionMask> masks;
  masks.reserve(batch.layouts.size());
  for (const auto& layout : batch.layouts)
    masks.push_back(layout.history_count() == 0 ? causal_mask(layout) : ht_mask(layout, selection, rng));
  return masks;
}

}  // namespace htseq
