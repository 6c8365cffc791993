// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "htseq/kvconfig.hpp"
#include "htseq/model.hpp"
#include "htseq/rng.hpp"
#include "htseq/seqdata.hpp"
#include "htseq/tensor.hpp"

namespace htseq {

/// Per-field weights of the next-event loss.
struct LossWeights {
  std::vector<double> categorical;  // one per categorical field, schema order
  std::vector<double> numerical;    // one per numerical field
  double dt = 1.0;

  static LossWeights uniform(const Schema& schema);
  void validate(const Schema& schema) const;
  /// Keys: loss.weight.<field> and loss.weight.dt; missing keys default to 1.
  static LossWeights from_config(const KvConfig& cfg, const Schema& schema);
};

/// Which packed positions predict which events.
struct NtpTargets {
  std::vector<std::size_t> sources;       // packed token rows that make a prediction
  std::vector<std::size_t> target_cells;  // PaddedBatch cell of the predicted event
  std::vector<double> dt;                 // t[next] - t[current]

  std::size_t size() const { return sources.size(); }
};

/// Every Event token whose event has a successor predicts that successor.
/// History and Pad tokens make no prediction and are never targets, so an
/// event followed by History tokens still predicts the next event.
NtpTargets ntp_targets(const PaddedBatch& batch, const PackedBatch& packed);

/// Weighted sum over fields of cross-entropy (categorical) and MAE (numerical,
/// inter-event time), each averaged over the rows of `targets`. Predictions
/// are aligned with `targets.sources`.
ad::Tensor ntp_loss(const NtpOutputs& predictions, const PaddedBatch& batch, const NtpTargets& targets,
                    const LossWeights& weights);

/// Runs the prediction head on the target sources and applies ntp_loss.
ad::Tensor ntp_loss(const HtTransformer& model, const HiddenStates& hidden, const PaddedBatch& batch,
                    const PackedBatch& packed, const LossWeights& weights);

/// K contiguous slices with length uniform in [min(10, N), N] and a uniform
/// start. Sequences shorter than two events yield no slices.
std::vector<EventSequence> sample_subsequences(const EventSequence& seq, std::size_t k, Rng& rng);

/// Squared distance for a positive pair, squared hinge max(0, margin - d)
/// for a negative pair.
double contrastive_loss(std::span<const double> a, std::span<const double> b, bool same_id, double margin);

/// Mean of contrastive_loss over all unordered row pairs of `embeddings`.
ad::Tensor coles_batch_loss(const ad::Tensor& embeddings, const std::vector<std::string>& ids, double margin);

/// Cross-entropy of class logits; labels must lie in [0, classes).
ad::Tensor supervised_loss(const ad::Tensor& logits, std::span<const std::int64_t> labels);

}  // namespace htseq
