// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "htseq/attention.hpp"
#include "htseq/encoder.hpp"
#include "htseq/httokens.hpp"
#include "htseq/kvconfig.hpp"
#include "htseq/optim.hpp"
#include "htseq/seqdata.hpp"
#include "htseq/tensor.hpp"

namespace htseq {

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 128;
  double dropout = 0.1;
  std::size_t categorical_dim = 16;

  void validate() const;
  /// Keys: model.layers, model.d_model, model.heads, model.ff_dim, model.dropout, model.categorical_dim.
  static TransformerConfig from_config(const KvConfig& cfg);
  void write_to(KvConfig& cfg) const;
};

/// Batch rows packed back to back without padding.
struct PackedBatch {
  ad::Tensor tokens;  // (T, d_model) embedded input including time encoding
  std::shared_ptr<const ad::AttentionPattern> pattern;
  std::vector<std::size_t> offsets;  // first packed row of each batch row
  std::vector<std::size_t> lengths;  // non-pad tokens of each batch row
  AugmentedBatch layouts;

  std::size_t packed_index(std::size_t row, std::size_t pos) const { return offsets[row] + pos; }
  std::size_t total() const { return pattern ? pattern->tokens : 0; }
};

struct HiddenStates {
  ad::Tensor input;
  std::vector<ad::Tensor> layers;  // residual stream after each block

  const ad::Tensor& final() const { return layers.empty() ? input : layers.back(); }
};

enum class EmbeddingStrategy { HistoryToken, LastToken, MeanTokens, Cls };

EmbeddingStrategy parse_strategy(std::string_view text);
std::string_view to_string(EmbeddingStrategy strategy);
/// HistoryToken and Cls read the final History token of an inference layout.
bool needs_history_token(EmbeddingStrategy strategy);

struct NtpOutputs {
  std::vector<ad::Tensor> categorical;  // per categorical field, (n, cardinality) logits
  std::vector<ad::Tensor> numerical;    // per numerical field, (n, 1)
  ad::Tensor dt;                        // (n, 1) inter-event time
};

/// Decoder-only transformer over event tokens and history tokens.
///
/// Pre-norm blocks with relu feed-forward. Every History token shares one
/// learned input vector. The next-token head and the optional classification
/// head read the final-normalized residual stream.
class HtTransformer {
 public:
  HtTransformer(Schema schema, TransformerConfig config, TimeStats time, std::uint64_t seed);

  const Schema& schema() const { return schema_; }
  const TransformerConfig& config() const { return config_; }
  const TimeStats& time_stats() const { return time_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  const EventEmbedder& embedder() const { return *embedder_; }

  /// Embeds events, inserts the History vector and packs non-pad tokens.
  PackedBatch pack(const PaddedBatch& batch, const AugmentedBatch& layouts,
                   const std::vector<AttentionMask>& masks) const;

  /// Runs the block stack. Dropout is active only when `dropout_rng` is set.
  HiddenStates forward(const ad::Tensor& tokens, std::shared_ptr<const ad::AttentionPattern> pattern,
                       Rng* dropout_rng = nullptr) const;
  HiddenStates forward(const PackedBatch& packed, Rng* dropout_rng = nullptr) const {
    return forward(packed.tokens, packed.pattern, dropout_rng);
  }

  /// Next-event predictions for each row of `hidden` (any subset of positions).
  NtpOutputs ntp_predict(const ad::Tensor& hidden) const;

  /// (B, d_model) sequence embeddings, one per batch row.
  ad::Tensor extract_embedding(const HiddenStates& hidden, const PackedBatch& packed,
                               EmbeddingStrategy strategy) const;

  /// Replaces the classification head with a fresh one of `num_classes` outputs.
  void reset_classifier(std::size_t num_classes, std::uint64_t seed);
  std::size_t num_classes() const { return num_classes_; }
  /// Logits from the final-normalized state of each row's last non-pad token.
  ad::Tensor classify(const HiddenStates& hidden, const PackedBatch& packed) const;

  /// Names of parameters outside the classification head.
  bool is_backbone_parameter(const std::string& name) const;

  /// Independent copy with identical parameter values.
  HtTransformer clone() const;

  /// Writes the checkpoint at `path` and model metadata at `path` + ".meta".
  void save(const std::filesystem::path& path) const;
  static HtTransformer load(const std::filesystem::path& path);

 private:
  struct Block {
    ad::Tensor ln1_g, ln1_b, qkv_w, qkv_b, out_w, out_b, ln2_g, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b;
  };

  ad::Tensor final_norm(const ad::Tensor& x) const;

  Schema schema_;
  TransformerConfig config_;
  TimeStats time_;
  ParameterStore params_;
  std::unique_ptr<EventEmbedder> embedder_;
  ad::Tensor history_;
  std::vector<Block> blocks_;
  ad::Tensor final_g_, final_b_;
  ad::Tensor head_w_, head_b_;
  std::size_t head_width_ = 0;
  std::size_t num_classes_ = 0;
  ad::Tensor cls_w_, cls_b_;
};

}  // namespace htseq
