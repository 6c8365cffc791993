// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "htseq/downstream.hpp"
#include "htseq/kvconfig.hpp"
#include "htseq/model.hpp"
#include "htseq/seqdata.hpp"
#include "htseq/toygen.hpp"
#include "htseq/training.hpp"

namespace htseq {

/// Method names accepted in experiment.methods.
inline constexpr std::array<std::string_view, 7> kMethods = {"supervised", "ntp_last", "ntp_avg", "coles",
                                                             "ntp_ht",     "ntp_cls",  "ht_sft"};

enum class Metric { Accuracy, RocAuc };

struct ExperimentConfig {
  KvConfig raw;  // every key, used for the fingerprint
  std::string data_source = "toy";  // "toy" or "file"
  std::string data_path;
  std::string schema_path;
  toy::ToyConfig toy;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
  bool standardize = false;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> methods{"supervised", "ntp_last", "ntp_avg", "coles", "ntp_ht"};
  std::vector<std::string> tasks;  // empty: the toy tasks (local, global)
  Metric metric = Metric::Accuracy;
  LogisticConfig downstream;
  TransformerConfig model;
  TrainConfig train;
  std::vector<double> sweep_f{0.0, 0.05, 0.1, 0.2, 0.5};
  std::vector<double> sweep_p{0.0, 0.25, 0.5, 0.75, 1.0};
  std::string sweep_mode = "axes";  // "axes" or "grid"

  static ExperimentConfig from_config(const KvConfig& cfg);
  /// FNV-1a of the canonical key-value text.
  std::string fingerprint() const;
};

struct PreparedData {
  Schema schema;
  DatasetSplit split;
  TimeStats time;
  std::vector<std::string> tasks;  // empty for file data without experiment.tasks
};

/// Loads or generates the dataset, splits it, and computes training-split statistics.
PreparedData prepare_data(const ExperimentConfig& config);

struct MetricRow {
  std::string method;
  std::string task;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

struct MetricsReport {
  std::vector<MetricRow> rows;
  std::string fingerprint;
  double wall_seconds = 0.0;

  /// method,task,seed,metric,value; deterministic (no timing).
  std::string csv() const;
  /// Median over seeds of one method/task cell.
  double median(const std::string& method, const std::string& task) const;
  /// Per-seed values and medians as an aligned table, with fingerprint and wall-clock.
  std::string summary() const;
};

/// Scores a frozen embedding with the downstream logistic regression.
double evaluate_embeddings(const std::vector<EmbeddingRecord>& train, const std::vector<EmbeddingRecord>& test,
                           const std::string& task, Metric metric, const LogisticConfig& config);

MetricsReport run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

struct SweepRow {
  std::string axis;  // "f", "p" or "grid"
  double f = 0.0;
  double p = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> values;  // one per task
};

struct SweepReport {
  std::vector<std::string> tasks;
  std::string metric;
  std::vector<SweepRow> rows;
  std::string fingerprint;
  double wall_seconds = 0.0;

  /// sweep_axis,f,p,seed,<task>_<metric>...
  std::string csv() const;
  std::string summary() const;
};

/// History-token pretraining over the configured f and p values. The "axes"
/// mode varies f at the configured ht.probability and p at the configured
/// ht.frequency; "grid" takes every (f, p) pair.
SweepReport run_sweep(const ExperimentConfig& config, std::ostream* log = nullptr);

}  // namespace htseq
