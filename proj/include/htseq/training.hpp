// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "htseq/httokens.hpp"
#include "htseq/kvconfig.hpp"
#include "htseq/model.hpp"
#include "htseq/objectives.hpp"
#include "htseq/seqdata.hpp"

namespace htseq {

enum class Objective { Ntp, Coles };

Objective parse_objective(std::string_view text);
std::string_view to_string(Objective objective);

struct TrainConfig {
  Objective objective = Objective::Ntp;
  std::size_t epochs = 30;  // pretraining and from-scratch supervised training
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_len = 512;  // longer sequences keep their most recent events
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::size_t sft_epochs = 20;
  bool freeze_backbone = false;
  std::size_t coles_k = 5;
  double coles_margin = 0.5;
  HTConfig ht;
  std::map<std::string, double> loss_weights;  // field name or "dt" -> weight; absent means 1

  LossWeights weights_for(const Schema& schema) const;
  void validate() const;
  /// Keys: train.objective, train.epochs, train.lr, train.batch_size,
  /// train.max_len, train.patience, train.seed, train.sft_epochs,
  /// train.freeze_backbone, coles.k, coles.margin, loss.weight.<field> and
  /// the ht.* keys.
  static TrainConfig from_config(const KvConfig& cfg);
  void write_to(KvConfig& cfg) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double val_metric = 0.0;  // validation loss (pretraining) or accuracy (fine-tuning)
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

/// Trains with the configured objective and restores the parameters of the
/// epoch with the lowest validation loss. Epoch 0 scores the initial model.
TrainResult pretrain(HtTransformer& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
                     std::ostream* log = nullptr);

/// Mean validation loss with fixed-seed History token placement.
double validation_loss(const HtTransformer& model, const Dataset& val, const TrainConfig& config);

/// Number of classes of `task`: one more than the largest label seen.
std::size_t task_classes(const std::vector<const Dataset*>& datasets, const std::string& task);

/// Attaches a fresh classification head and trains on the inference layout
/// (one History token after the last event) for `epochs` epochs, keeping the
/// parameters with the best validation accuracy.
TrainResult finetune(HtTransformer& model, const Dataset& train, const Dataset& val, const std::string& task,
                     std::size_t num_classes, std::size_t epochs, const TrainConfig& config,
                     std::ostream* log = nullptr);

/// Softmax class probabilities of a model with a classification head.
std::vector<std::vector<double>> predict_probabilities(const HtTransformer& model, const Dataset& data,
                                                       const TrainConfig& config);
/// Most probable class per sequence.
std::vector<std::int64_t> predict_classes(const HtTransformer& model, const Dataset& data, const TrainConfig& config);

struct EmbeddingRecord {
  std::string id;
  std::vector<double> vector;
  std::map<std::string, std::int64_t> labels;
};

/// One embedding per sequence, in dataset order.
std::vector<EmbeddingRecord> extract_embeddings(const HtTransformer& model, const Dataset& data,
                                                EmbeddingStrategy strategy, std::size_t batch_size,
                                                std::size_t max_len);

std::string embeddings_to_ndjson(const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> parse_embeddings(const std::string& text);
void save_embeddings(const std::vector<EmbeddingRecord>& records, const std::filesystem::path& path);
std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path);

}  // namespace htseq
