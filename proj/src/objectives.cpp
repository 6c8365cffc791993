// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "htseq/error.hpp"

namespace htseq {

LossWeights LossWeights::uniform(const Schema& schema) {
  LossWeights w;
  w.categorical.assign(schema.num_categorical(), 1.0);
  w.numerical.assign(schema.num_numerical(), 1.0);
  return w;
}

void LossWeights::validate(const Schema& schema) const {
  if (categorical.size() != schema.num_categorical() || numerical.size() != schema.num_numerical())
    throw ConfigError("loss weights do not match the schema");
  bool positive = dt > 0.0;
  auto check = [&](double w) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and nonnegative");
    positive = positive || w > 0.0;
  };
  check(dt);
  for (double w : categorical) check(w);
  for (double w : numerical) check(w);
  if (!positive) throw ConfigError("at least one loss weight must be positive");
}

LossWeights LossWeights::from_config(const KvConfig& cfg, const Schema& schema) {
  LossWeights w;
  for (auto idx : schema.categorical())
    w.categorical.push_back(cfg.get_double("loss.weight." + schema.fields()[idx].name, 1.0));
  for (auto idx : schema.numerical())
    w.numerical.push_back(cfg.get_double("loss.weight." + schema.fields()[idx].name, 1.0));
  w.dt = cfg.get_double("loss.weight.dt", 1.0);
  w.validate(schema);
  return w;
}

NtpTargets ntp_targets(const PaddedBatch& batch, const PackedBatch& packed) {
  NtpTargets out;
  for (std::size_t b = 0; b < packed.offsets.size(); ++b) {
    const auto& layout = packed.layouts.layouts[b];
    for (std::size_t i = 0; i < packed.lengths[b]; ++i) {
      if (layout.tags[i] != TokenTag::Event) continue;
      const auto e = static_cast<std::size_t>(layout.event_index[i]);
      if (e + 1 >= batch.lengths[b]) continue;
      out.sources.push_back(packed.packed_index(b, i));
      out.target_cells.push_back(batch.index(b, e + 1));
      out.dt.push_back(batch.timestamp(b, e + 1) - batch.timestamp(b, e));
    }
  }
  return out;
}

ad::Tensor ntp_loss(const NtpOutputs& predictions, const PaddedBatch& batch, const NtpTargets& targets,
                    const LossWeights& weights) {
  if (targets.size() == 0) throw ValidationError("next-event loss has no valid prediction positions");
  if (predictions.categorical.size() != weights.categorical.size() ||
      predictions.numerical.size() != weights.numerical.size())
    throw ShapeError("next-event predictions do not match the loss weights");
  std::vector<ad::Tensor> terms;
  for (std::size_t c = 0; c < predictions.categorical.size(); ++c) {
    if (weights.categorical[c] == 0.0) continue;
    std::vector<std::int64_t> labels(targets.size());
    for (std::size_t r = 0; r < targets.size(); ++r) labels[r] = batch.categorical[c][targets.target_cells[r]];
    terms.push_back(ad::scale(ad::cross_entropy(predictions.categorical[c], labels), weights.categorical[c]));
  }
  for (std::size_t k = 0; k < predictions.numerical.size(); ++k) {
    if (weights.numerical[k] == 0.0) continue;
    std::vector<double> values(targets.size());
    for (std::size_t r = 0; r < targets.size(); ++r) values[r] = batch.numerical[k][targets.target_cells[r]];
    terms.push_back(ad::scale(ad::mae(predictions.numerical[k], values), weights.numerical[k]));
  }
  if (weights.dt != 0.0) terms.push_back(ad::scale(ad::mae(predictions.dt, targets.dt), weights.dt));
  if (terms.empty()) throw ConfigError("every loss weight is zero");
  ad::Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return total;
}

ad::Tensor ntp_loss(const HtTransformer& model, const HiddenStates& hidden, const PaddedBatch& batch,
                    const PackedBatch& packed, const LossWeights& weights) {
  const auto targets = ntp_targets(batch, packed);
  if (targets.size() == 0) throw ValidationError("next-event loss has no valid prediction positions");
  return ntp_loss(model.ntp_predict(ad::gather_rows(hidden.final(), targets.sources)), batch, targets, weights);
}

std::vector<EventSequence> sample_subsequences(const EventSequence& seq, std::size_t k, Rng& rng) {
  std::vector<EventSequence> out;
  const auto n = static_cast<std::int64_t>(seq.size());
  if (n < 2) return out;
  const auto min_len = std::min<std::int64_t>(10, n);
  for (std::size_t i = 0; i < k; ++i) {
    const auto len = rng.uniform_int(min_len, n);
    const auto start = rng.uniform_int(0, n - len);
    out.push_back(seq.slice(static_cast<std::size_t>(start), static_cast<std::size_t>(start + len)));
  }
  return out;
}

double contrastive_loss(std::span<const double> a, std::span<const double> b, bool same_id, double margin) {
  if (a.size() != b.size()) throw ShapeError("contrastive loss: embedding widths differ");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  if (same_id) return sq;
  const double gap = std::max(0.0, margin - std::sqrt(sq));
  return gap * gap;
}

ad::Tensor coles_batch_loss(const ad::Tensor& embeddings, const std::vector<std::string>& ids, double margin) {
  const auto n = embeddings.rows(), d = embeddings.cols();
  if (ids.size() != n) throw ShapeError("coles loss: one id per embedding row required");
  if (!(margin > 0.0)) throw ConfigError("coles margin must be positive");
  if (std::all_of(ids.begin(), ids.end(), [&](const std::string& id) { return id == ids.front(); }))
    throw ValidationError("coles loss needs at least two distinct ids in a batch");
  const auto e = embeddings.data();
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  // Per pair: d loss / d e_i = coef * (e_i - e_j), and the negation for e_j.
  std::vector<double> coef;
  coef.reserve(n * (n - 1) / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = e[i * d + c] - e[j * d + c];
        sq += diff * diff;
      }
      if (ids[i] == ids[j]) {
        total += sq;
        coef.push_back(2.0);
      } else {
        const double dist = std::sqrt(sq);
        const double gap = margin - dist;
        if (gap > 0.0 && dist > 0.0) {
          total += gap * gap;
          coef.push_back(-2.0 * gap / dist);
        } else {
          if (gap > 0.0) total += gap * gap;
          coef.push_back(0.0);
        }
      }
    }
  }
  auto parent = embeddings.ptr();
  return ad::make_result({1}, {total / pairs}, {embeddings}, [parent, coef = std::move(coef), n, d, pairs](ad::Node& self) {
    auto g = ad::grad_of(parent);
    if (g.empty()) return;
    const double up = self.grad[0] / pairs;
    const auto& x = parent->value;
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j, ++p) {
        const double c = coef[p] * up;
        if (c == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = x[i * d + k] - x[j * d + k];
          g[i * d + k] += c * diff;
          g[j * d + k] -= c * diff;
        }
      }
    }
  });
}

ad::Tensor supervised_loss(const ad::Tensor& logits, std::span<const std::int64_t> labels) {
  const auto classes = static_cast<std::int64_t>(logits.cols());
  if (labels.size() != logits.rows()) throw ShapeError("supervised loss: one label per logit row required");
  for (auto y : labels)
    if (y < 0 || y >= classes)
      throw ValidationError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  return ad::cross_entropy(logits, labels);
}

}  // namespace htseq
