// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "htseq/kvconfig.hpp"

namespace htseq {

enum class FieldKind { Categorical, Numerical };

struct FieldSchema {
  std::string name;
  FieldKind kind = FieldKind::Categorical;
  std::int64_t cardinality = 0;  // categorical only
};

/// Ordered list of event fields. The timestamp `t` is implicit.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<FieldSchema> fields);

  const std::vector<FieldSchema>& fields() const { return fields_; }
  /// Indices into fields() of categorical / numerical fields, in order.
  const std::vector<std::size_t>& categorical() const { return categorical_; }
  const std::vector<std::size_t>& numerical() const { return numerical_; }
  std::size_t num_categorical() const { return categorical_.size(); }
  std::size_t num_numerical() const { return numerical_.size(); }

  /// Reads `name = categorical:<cardinality>` or `name = numerical` lines.
  static Schema from_config(const KvConfig& cfg);
  static Schema load(const std::filesystem::path& path);
  KvConfig to_config() const;

  bool operator==(const Schema& other) const;

 private:
  std::vector<FieldSchema> fields_;
  std::vector<std::size_t> categorical_;
  std::vector<std::size_t> numerical_;
};

/// Timestamped multi-field events of one entity.
///
/// `categorical[c]` holds the codes of the c-th categorical field of the
/// schema, `numerical[k]` the values of the k-th numerical field.
struct EventSequence {
  std::string id;
  std::vector<double> timestamps;
  std::vector<std::vector<std::int64_t>> categorical;
  std::vector<std::vector<double>> numerical;
  std::map<std::string, std::int64_t> labels;

  std::size_t size() const { return timestamps.size(); }

  /// Contiguous slice [begin, end); labels and id are kept.
  EventSequence slice(std::size_t begin, std::size_t end) const;
};

/// Throws ValidationError naming the offending field.
void validate_sequence(const EventSequence& seq, const Schema& schema);

struct Dataset {
  Schema schema;
  std::vector<EventSequence> sequences;

  std::size_t size() const { return sequences.size(); }
  bool empty() const { return sequences.empty(); }
};

/// Parses newline-delimited JSON records:
/// {"id": "...", "labels": {"task": 0}, "events": [{"t": 0.0, "field": 3}, ...]}
Dataset load_dataset(const std::filesystem::path& path, const Schema& schema);
Dataset parse_dataset(const std::string& text, const Schema& schema);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string dataset_to_ndjson(const Dataset& dataset);

struct DatasetSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Deterministic partition keyed on (sequence id, seed).
DatasetSplit split_dataset(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed);

/// Rows padded to the longest row. Element (b, i) lives at b * max_length + i.
struct PaddedBatch {
  std::size_t batch_size = 0;
  std::size_t max_length = 0;
  std::vector<std::size_t> lengths;
  std::vector<std::string> ids;
  std::vector<std::map<std::string, std::int64_t>> labels;
  std::vector<double> timestamps;
  std::vector<std::vector<std::int64_t>> categorical;  // [field][b * L + i]
  std::vector<std::vector<double>> numerical;          // [field][b * L + i]

  std::size_t index(std::size_t row, std::size_t pos) const { return row * max_length + pos; }
  bool is_pad(std::size_t row, std::size_t pos) const { return pos >= lengths[row]; }
  double timestamp(std::size_t row, std::size_t pos) const { return timestamps[index(row, pos)]; }
};

/// Pads the given sequences (each truncated to its last `max_len` events).
PaddedBatch make_padded_batch(const std::vector<const EventSequence*>& rows, const Schema& schema,
                              std::size_t max_len);

/// Shuffles with `seed` and cuts into batches of at most `batch_size` rows.
std::vector<PaddedBatch> make_batches(const Dataset& dataset, std::size_t batch_size, std::size_t max_len,
                                      std::uint64_t seed);

/// Same as make_batches without shuffling (evaluation order).
std::vector<PaddedBatch> make_ordered_batches(const Dataset& dataset, std::size_t batch_size,
                                              std::size_t max_len);

/// Keeps the most recent `max_len` events.
EventSequence truncate_suffix(const EventSequence& seq, std::size_t max_len);

/// Time-scale constants for the positional encoding.
struct TimeStats {
  double min_scale = 1.0;  // m
  double max_scale = 1.0;  // M
};

/// Linear-interpolated percentile (q in [0, 100]) of sorted values.
double percentile_sorted(const std::vector<double>& sorted, double q);

/// m = max(1e-6, 1st percentile of positive timestamps), M = max(m, 99th percentile).
TimeStats compute_time_stats(const Dataset& train);

struct NumericalStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

NumericalStats compute_numerical_stats(const Dataset& train);
/// z-scores every numerical field in place; stddev 0 leaves values centred.
void standardize_numerical(Dataset& dataset, const NumericalStats& stats);

}  // namespace htseq
