// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/toygen.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "htseq/error.hpp"

namespace htseq::toy {

void ToyConfig::validate() const {
  if (parts_min < 1 || parts_max < parts_min) throw ConfigError("toy parts range must satisfy 1 <= min <= max");
  if (num_matrices < parts_max) throw ConfigError("toy num_matrices must be >= parts_max");
  if (label_vocab < 2) throw ConfigError("toy label_vocab must be >= 2");
  if (segment_min < 1 || segment_max < segment_min) throw ConfigError("toy segment length range must satisfy 1 <= min <= max");
  if (num_sequences < 0) throw ConfigError("toy num_sequences must be >= 0");
  if (!(dirichlet_alpha > 0.0)) throw ConfigError("toy dirichlet_alpha must be positive");
}

ToyConfig ToyConfig::from_config(const KvConfig& cfg) {
  ToyConfig c;
  c.num_matrices = cfg.get_int("toy.num_matrices", c.num_matrices);
  c.label_vocab = cfg.get_int("toy.label_vocab", c.label_vocab);
  c.parts_min = cfg.get_int("toy.parts_min", c.parts_min);
  c.parts_max = cfg.get_int("toy.parts_max", c.parts_max);
  c.segment_min = cfg.get_int("toy.segment_min", c.segment_min);
  c.segment_max = cfg.get_int("toy.segment_max", c.segment_max);
  c.num_sequences = cfg.get_int("toy.num_sequences", c.num_sequences);
  c.dirichlet_alpha = cfg.get_double("toy.dirichlet_alpha", c.dirichlet_alpha);
  c.seed = static_cast<std::uint64_t>(cfg.get_int("toy.seed", static_cast<std::int64_t>(c.seed)));
  c.validate();
  return c;
}

void ToyConfig::write_to(KvConfig& cfg) const {
  cfg.set("toy.num_matrices", std::to_string(num_matrices));
  cfg.set("toy.label_vocab", std::to_string(label_vocab));
  cfg.set("toy.parts_min", std::to_string(parts_min));
  cfg.set("toy.parts_max", std::to_string(parts_max));
  cfg.set("toy.segment_min", std::to_string(segment_min));
  cfg.set("toy.segment_max", std::to_string(segment_max));
  cfg.set("toy.num_sequences", std::to_string(num_sequences));
  cfg.set("toy.dirichlet_alpha", format_double(dirichlet_alpha));
  cfg.set("toy.seed", std::to_string(seed));
}

double matrix_distance(const TransitionMatrix& a, const TransitionMatrix& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.probs.size(); ++i) total += std::abs(a.probs[i] - b.probs[i]);
  return 0.5 * total / static_cast<double>(a.vocab);
}

namespace {

TransitionMatrix sample_matrix(std::int64_t vocab, Rng& rng, double alpha) {
  TransitionMatrix m;
  m.vocab = vocab;
  m.probs.resize(static_cast<std::size_t>(vocab * vocab));
  for (std::int64_t r = 0; r < vocab; ++r) {
    double sum = 0.0;
    for (std::int64_t c = 0; c < vocab; ++c) sum += (m.probs[r * vocab + c] = rng.gamma(alpha));
    if (!(sum > 0.0)) {
      // Every gamma draw underflowed; fall back to a uniform row.
      for (std::int64_t c = 0; c < vocab; ++c) m.probs[r * vocab + c] = 1.0 / static_cast<double>(vocab);
      continue;
    }
    for (std::int64_t c = 0; c < vocab; ++c) m.probs[r * vocab + c] /= sum;
  }
  return m;
}

std::int64_t sample_categorical(const double* probs, std::int64_t n, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the cumulative sum; return the last nonzero entry.
  for (std::int64_t i = n - 1; i >= 0; --i)
    if (probs[i] > 0.0) return i;
  return n - 1;
}

}  // namespace

std::vector<TransitionMatrix> sample_transition_matrices(std::int64_t k, std::int64_t vocab, Rng& rng, double alpha) {
  if (k < 1) throw ConfigError("need at least one transition matrix");
  if (vocab < 2) throw ConfigError("transition matrix vocabulary must be >= 2");
  constexpr double kMinDistance = 0.05;
  constexpr int kMaxAttempts = 100;
  std::vector<TransitionMatrix> out;
  while (static_cast<std::int64_t>(out.size()) < k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      auto candidate = sample_matrix(vocab, rng, alpha);
      bool distinct = true;
      for (const auto& prev : out)
        if (matrix_distance(prev, candidate) <= kMinDistance) distinct = false;
      if (distinct) {
        out.push_back(std::move(candidate));
        placed = true;
      }
    }
    if (!placed)
      throw ValidationError("could not sample " + std::to_string(k) + " distinct transition matrices over " +
                            std::to_string(vocab) + " states");
  }
  return out;
}

Schema toy_schema(const ToyConfig& config) {
  return Schema({FieldSchema{kLabelField, FieldKind::Categorical, config.label_vocab}});
}

EventSequence generate_from_plan(const std::vector<Segment>& plan, const std::vector<TransitionMatrix>& matrices,
                                 Rng& rng, std::string id) {
  EventSequence seq;
  seq.id = std::move(id);
  seq.categorical.resize(1);
  if (plan.empty()) return seq;
  const auto vocab = matrices.front().vocab;
  std::int64_t state = rng.uniform_int(0, vocab - 1);
  bool first = true;
  for (const auto& segment : plan) {
    const auto& m = matrices.at(static_cast<std::size_t>(segment.matrix));
    for (std::int64_t step = 0; step < segment.length; ++step) {
      if (!first) state = sample_categorical(&m.probs[state * vocab], vocab, rng);
      first = false;
      seq.timestamps.push_back(static_cast<double>(seq.timestamps.size()));
      seq.categorical[0].push_back(state);
    }
  }
  seq.labels[kGlobalTask] = static_cast<std::int64_t>(plan.size()) - 1;
  seq.labels[kLocalTask] = plan.back().matrix;
  return seq;
}

std::vector<Segment> sample_plan(const ToyConfig& config, Rng& rng) {
  const auto parts = rng.uniform_int(config.parts_min, config.parts_max);
  std::vector<std::int64_t> pool(static_cast<std::size_t>(config.num_matrices));
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates: the first `parts` entries are a draw without replacement.
  for (std::int64_t i = 0; i < parts; ++i) {
    auto j = rng.uniform_int(i, config.num_matrices - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  std::vector<Segment> plan;
  for (std::int64_t i = 0; i < parts; ++i)
    plan.push_back({pool[static_cast<std::size_t>(i)], rng.uniform_int(config.segment_min, config.segment_max)});
  return plan;
}

EventSequence generate_sequence(const ToyConfig& config, const std::vector<TransitionMatrix>& matrices, Rng& rng,
                                std::string id) {
  const auto plan = sample_plan(config, rng);
  return generate_from_plan(plan, matrices, rng, std::move(id));
}

ToyDataset generate_dataset(const ToyConfig& config) {
  config.validate();
  ToyDataset out;
  Rng matrix_rng(Rng::derive(config.seed, "toy.matrices"));
  out.matrices = sample_transition_matrices(config.num_matrices, config.label_vocab, matrix_rng, config.dirichlet_alpha);
  out.dataset.schema = toy_schema(config);
  for (std::int64_t i = 0; i < config.num_sequences; ++i) {
    Rng rng(Rng::derive(Rng::derive(config.seed, "toy.sequence"), static_cast<std::uint64_t>(i)));
    char id[32];
    std::snprintf(id, sizeof(id), "toy-%06lld", static_cast<long long>(i));
    out.dataset.sequences.push_back(generate_sequence(config, out.matrices, rng, id));
  }
  return out;
}

}  // namespace htseq::toy
