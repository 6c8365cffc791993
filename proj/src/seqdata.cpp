// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/seqdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "htseq/error.hpp"
#include "htseq/rng.hpp"
#include "json.hpp"

namespace htseq {

using json = nlohmann::json;

Schema::Schema(std::vector<FieldSchema> fields) : fields_(std::move(fields)) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    const auto& f = fields_[i];
    if (f.name.empty()) throw ValidationError("field name must not be empty");
    if (f.name == "t") throw ValidationError("field name 't' is reserved for the timestamp");
    if (!names.insert(f.name).second) throw ValidationError("duplicate field name '" + f.name + "'");
    if (f.kind == FieldKind::Categorical) {
      if (f.cardinality < 2)
        throw ValidationError("field '" + f.name + "': categorical cardinality must be >= 2");
      categorical_.push_back(i);
    } else {
      numerical_.push_back(i);
    }
  }
}

Schema Schema::from_config(const KvConfig& cfg) {
  std::vector<FieldSchema> fields;
  for (const auto& [name, value] : cfg.entries()) {
    FieldSchema f;
    f.name = name;
    if (value == "numerical") {
      f.kind = FieldKind::Numerical;
    } else if (value.rfind("categorical:", 0) == 0) {
      f.kind = FieldKind::Categorical;
      f.cardinality = parse_int(value.substr(12), name);
    } else {
      throw ValidationError("field '" + name + "': kind must be 'numerical' or 'categorical:<n>'");
    }
    fields.push_back(std::move(f));
  }
  return Schema(std::move(fields));
}

Schema Schema::load(const std::filesystem::path& path) { return from_config(KvConfig::load(path)); }

KvConfig Schema::to_config() const {
  KvConfig cfg;
  for (const auto& f : fields_)
    cfg.set(f.name, f.kind == FieldKind::Numerical ? "numerical" : "categorical:" + std::to_string(f.cardinality));
  return cfg;
}

bool Schema::operator==(const Schema& other) const {
  if (fields_.size() != other.fields_.size()) return false;
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    const auto& a = fields_[i];
    const auto& b = other.fields_[i];
    if (a.name != b.name || a.kind != b.kind || a.cardinality != b.cardinality) return false;
  }
  return true;
}

EventSequence EventSequence::slice(std::size_t begin, std::size_t end) const {
  EventSequence out;
  out.id = id;
  out.labels = labels;
  out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
  for (const auto& col : categorical) out.categorical.emplace_back(col.begin() + begin, col.begin() + end);
  for (const auto& col : numerical) out.numerical.emplace_back(col.begin() + begin, col.begin() + end);
  return out;
}

void validate_sequence(const EventSequence& seq, const Schema& schema) {
  const auto n = seq.timestamps.size();
  for (std::size_t i = 1; i < n; ++i) {
    if (!(seq.timestamps[i - 1] <= seq.timestamps[i]))
      throw ValidationError("sequence '" + seq.id + "': field 't' is not nondecreasing at event " +
                            std::to_string(i));
  }
  for (double t : seq.timestamps)
    if (!std::isfinite(t)) throw ValidationError("sequence '" + seq.id + "': field 't' is not finite");
  if (seq.categorical.size() != schema.num_categorical() || seq.numerical.size() != schema.num_numerical())
    throw ValidationError("sequence '" + seq.id + "': field count does not match schema");
  for (std::size_t c = 0; c < schema.num_categorical(); ++c) {
    const auto& field = schema.fields()[schema.categorical()[c]];
    const auto& col = seq.categorical[c];
    if (col.size() != n) throw ValidationError("sequence '" + seq.id + "': field '" + field.name + "' length mismatch");
    for (auto code : col)
      if (code < 0 || code >= field.cardinality)
        throw ValidationError("sequence '" + seq.id + "': field '" + field.name + "' code " + std::to_string(code) +
                              " outside [0, " + std::to_string(field.cardinality) + ")");
  }
  for (std::size_t k = 0; k < schema.num_numerical(); ++k) {
    const auto& field = schema.fields()[schema.numerical()[k]];
    const auto& col = seq.numerical[k];
    if (col.size() != n) throw ValidationError("sequence '" + seq.id + "': field '" + field.name + "' length mismatch");
    for (double v : col)
      if (!std::isfinite(v)) throw ValidationError("sequence '" + seq.id + "': field '" + field.name + "' not finite");
  }
}

namespace {

EventSequence parse_record(const json& rec, const Schema& schema, std::size_t line) {
  if (!rec.is_object()) throw ParseError("record must be a JSON object", line);
  EventSequence seq;
  auto id = rec.find("id");
  if (id == rec.end() || !id->is_string()) throw ParseError("record needs a string 'id'", line);
  seq.id = id->get<std::string>();
  if (auto labels = rec.find("labels"); labels != rec.end()) {
    if (!labels->is_object()) throw ParseError("'labels' must be an object", line);
    for (auto it = labels->begin(); it != labels->end(); ++it) {
      if (!it->is_number_integer()) throw ParseError("label '" + it.key() + "' must be an integer", line);
      seq.labels[it.key()] = it->get<std::int64_t>();
    }
  }
  auto events = rec.find("events");
  if (events == rec.end() || !events->is_array()) throw ParseError("record needs an 'events' array", line);
  seq.categorical.resize(schema.num_categorical());
  seq.numerical.resize(schema.num_numerical());
  for (const auto& ev : *events) {
    if (!ev.is_object()) throw ParseError("event must be an object", line);
    auto t = ev.find("t");
    if (t == ev.end() || !t->is_number())
      throw ValidationError("line " + std::to_string(line) + ": field 't' missing or not a number");
    seq.timestamps.push_back(t->get<double>());
    for (std::size_t c = 0; c < schema.num_categorical(); ++c) {
      const auto& name = schema.fields()[schema.categorical()[c]].name;
      auto v = ev.find(name);
      if (v == ev.end() || !v->is_number_integer())
        throw ValidationError("line " + std::to_string(line) + ": field '" + name + "' missing or not an integer");
      seq.categorical[c].push_back(v->get<std::int64_t>());
    }
    for (std::size_t k = 0; k < schema.num_numerical(); ++k) {
      const auto& name = schema.fields()[schema.numerical()[k]].name;
      auto v = ev.find(name);
      if (v == ev.end() || !v->is_number())
        throw ValidationError("line " + std::to_string(line) + ": field '" + name + "' missing or not a number");
      seq.numerical[k].push_back(v->get<double>());
    }
  }
  try {
    validate_sequence(seq, schema);
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  return seq;
}

}  // namespace

Dataset parse_dataset(const std::string& text, const Schema& schema) {
  Dataset ds;
  ds.schema = schema;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line_no);
    }
    ds.sequences.push_back(parse_record(rec, schema, line_no));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str(), schema);
}

std::string dataset_to_ndjson(const Dataset& dataset) {
  const auto& schema = dataset.schema;
  std::string out;
  for (const auto& seq : dataset.sequences) {
    nlohmann::ordered_json rec;
    rec["id"] = seq.id;
    rec["labels"] = nlohmann::ordered_json::object();
    for (const auto& [task, value] : seq.labels) rec["labels"][task] = value;
    auto events = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < seq.size(); ++i) {
      nlohmann::ordered_json ev;
      ev["t"] = seq.timestamps[i];
      for (std::size_t c = 0; c < schema.num_categorical(); ++c)
        ev[schema.fields()[schema.categorical()[c]].name] = seq.categorical[c][i];
      for (std::size_t k = 0; k < schema.num_numerical(); ++k)
        ev[schema.fields()[schema.numerical()[k]].name] = seq.numerical[k][i];
      events.push_back(std::move(ev));
    }
    rec["events"] = std::move(events);
    out += rec.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset file " + path.string());
  out << dataset_to_ndjson(dataset);
}

DatasetSplit split_dataset(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions)
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1, got " + format_double(total));

  const std::size_t n = dataset.size();
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  keyed.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = dataset.sequences[i].id;
    keyed.emplace_back(mix64(fnv1a64(id) ^ mix64(seed)), i);
  }
  // Ties in the hash fall back to the id so the order never depends on input order.
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return dataset.sequences[a.second].id < dataset.sequences[b.second].id;
  });
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val =
      std::min(n - std::min(n, n_train), static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));

  DatasetSplit split;
  split.train.schema = split.validation.schema = split.test.schema = dataset.schema;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& seq = dataset.sequences[keyed[r].second];
    if (r < n_train)
      split.train.sequences.push_back(seq);
    else if (r < n_train + n_val)
      split.validation.sequences.push_back(seq);
    else
      split.test.sequences.push_back(seq);
  }
  return split;
}

EventSequence truncate_suffix(const EventSequence& seq, std::size_t max_len) {
  if (seq.size() <= max_len) return seq;
  return seq.slice(seq.size() - max_len, seq.size());
}

PaddedBatch make_padded_batch(const std::vector<const EventSequence*>& rows, const Schema& schema,
                              std::size_t max_len) {
  PaddedBatch batch;
  batch.batch_size = rows.size();
  for (const auto* seq : rows) {
    batch.lengths.push_back(std::min(seq->size(), max_len));
    batch.ids.push_back(seq->id);
    batch.labels.push_back(seq->labels);
  }
  batch.max_length = batch.lengths.empty() ? 0 : *std::max_element(batch.lengths.begin(), batch.lengths.end());
  const std::size_t cells = batch.batch_size * batch.max_length;
  batch.timestamps.assign(cells, 0.0);
  batch.categorical.assign(schema.num_categorical(), std::vector<std::int64_t>(cells, 0));
  batch.numerical.assign(schema.num_numerical(), std::vector<double>(cells, 0.0));
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto& seq = *rows[b];
    const std::size_t offset = seq.size() - batch.lengths[b];
    for (std::size_t i = 0; i < batch.lengths[b]; ++i) {
      const auto cell = batch.index(b, i);
      batch.timestamps[cell] = seq.timestamps[offset + i];
      for (std::size_t c = 0; c < schema.num_categorical(); ++c) batch.categorical[c][cell] = seq.categorical[c][offset + i];
      for (std::size_t k = 0; k < schema.num_numerical(); ++k) batch.numerical[k][cell] = seq.numerical[k][offset + i];
    }
  }
  return batch;
}

namespace {

std::vector<PaddedBatch> batches_in_order(const Dataset& dataset, const std::vector<std::size_t>& order,
                                          std::size_t batch_size, std::size_t max_len) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  std::vector<PaddedBatch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<const EventSequence*> rows;
    for (std::size_t r = start; r < std::min(order.size(), start + batch_size); ++r)
      rows.push_back(&dataset.sequences[order[r]]);
    out.push_back(make_padded_batch(rows, dataset.schema, max_len));
  }
  return out;
}

}  // namespace

std::vector<PaddedBatch> make_batches(const Dataset& dataset, std::size_t batch_size, std::size_t max_len,
                                      std::uint64_t seed) {
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  return batches_in_order(dataset, order, batch_size, max_len);
}

std::vector<PaddedBatch> make_ordered_batches(const Dataset& dataset, std::size_t batch_size, std::size_t max_len) {
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  return batches_in_order(dataset, order, batch_size, max_len);
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ValidationError("percentile of an empty set");
  const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(sorted.size() - 1, lo + 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

TimeStats compute_time_stats(const Dataset& train) {
  std::vector<double> all;
  std::vector<double> positive;
  for (const auto& seq : train.sequences) {
    for (double t : seq.timestamps) {
      all.push_back(t);
      if (t > 0.0) positive.push_back(t);
    }
  }
  if (all.empty()) throw ValidationError("time statistics need at least one timestamp");
  if (positive.empty()) throw ValidationError("degenerate time scale: no positive timestamps");
  std::sort(all.begin(), all.end());
  std::sort(positive.begin(), positive.end());
  TimeStats stats;
  stats.min_scale = std::max(1e-6, percentile_sorted(positive, 1.0));
  stats.max_scale = std::max(stats.min_scale, percentile_sorted(all, 99.0));
  return stats;
}

NumericalStats compute_numerical_stats(const Dataset& train) {
  const auto k = train.schema.num_numerical();
  NumericalStats stats;
  stats.mean.assign(k, 0.0);
  stats.stddev.assign(k, 0.0);
  for (std::size_t f = 0; f < k; ++f) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& seq : train.sequences)
      for (double v : seq.numerical[f]) {
        sum += v;
        ++count;
      }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (const auto& seq : train.sequences)
      for (double v : seq.numerical[f]) sq += (v - mean) * (v - mean);
    stats.mean[f] = mean;
    stats.stddev[f] = std::sqrt(sq / static_cast<double>(count));
  }
  return stats;
}

void standardize_numerical(Dataset& dataset, const NumericalStats& stats) {
  for (auto& seq : dataset.sequences)
    for (std::size_t f = 0; f < seq.numerical.size(); ++f)
      for (double& v : seq.numerical[f]) {
        v -= stats.mean[f];
        if (stats.stddev[f] > 0.0) v /= stats.stddev[f];
      }
}

}  // namespace htseq
