// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "htseq/optim.hpp"
#include "htseq/rng.hpp"
#include "htseq/seqdata.hpp"
#include "htseq/tensor.hpp"

namespace htseq {

struct EmbedderConfig {
  std::size_t categorical_dim = 16;  // embedding width per categorical field
  std::size_t d_model = 64;
  std::size_t d_pe = 64;  // positional part, added to the leading d_pe dims
  TimeStats time;

  void validate() const;
};

/// Component i of the time encoding:
///   sin(t / (m * (5M/m)^(i/d_pe)))      for even i
///   cos(t / (m * (5M/m)^((i-1)/d_pe)))  for odd i
std::vector<double> positional_encoding(double t, std::size_t d_pe, const TimeStats& time);

/// Per-field event encoder: categorical lookups and raw numerical values are
/// concatenated and projected to d_model.
class EventEmbedder {
 public:
  /// Registers tables and projection under `prefix` in `params`.
  EventEmbedder(const Schema& schema, EmbedderConfig config, ParameterStore& params, Rng& rng,
                std::string prefix = "embed.");

  const EmbedderConfig& config() const { return config_; }
  std::size_t concat_width() const;

  /// Projected embeddings of n events (no positional part). `categorical[c]`
  /// and `numerical[k]` hold n values each.
  ad::Tensor encode_events(const std::vector<std::vector<std::int64_t>>& categorical,
                           const std::vector<std::vector<double>>& numerical, std::size_t n) const;

  /// Concatenated field encodings before projection, (n, concat_width()).
  ad::Tensor concat_fields(const std::vector<std::vector<std::int64_t>>& categorical,
                           const std::vector<std::vector<double>>& numerical, std::size_t n) const;

  ad::Tensor encode_event(const EventSequence& seq, std::size_t i) const;

  /// (N, d_model): encode_events plus the time encoding of each timestamp.
  ad::Tensor encode_sequence(const EventSequence& seq) const;

  /// (n, d_model) constant: time encodings padded with zeros past d_pe.
  ad::Tensor positional_rows(std::span<const double> timestamps) const;

  const ad::Tensor& table(std::size_t categorical_field) const { return tables_[categorical_field]; }

 private:
  Schema schema_;
  EmbedderConfig config_;
  // Handles alias the tensors owned by the ParameterStore.
  std::vector<ad::Tensor> tables_;
  ad::Tensor proj_w_;
  ad::Tensor proj_b_;
};

}  // namespace htseq
