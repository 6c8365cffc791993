// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htseq/kvconfig.hpp"
#include "htseq/rng.hpp"
#include "htseq/seqdata.hpp"

namespace htseq::toy {

inline constexpr const char* kGlobalTask = "global";
inline constexpr const char* kLocalTask = "local";
inline constexpr const char* kLabelField = "label";

/// Nonstationary Markov benchmark: each sequence concatenates 1..5 segments,
/// each walked under a different transition matrix drawn from a shared pool.
struct ToyConfig {
  std::int64_t num_matrices = 10;
  std::int64_t label_vocab = 8;
  std::int64_t parts_min = 1;
  std::int64_t parts_max = 5;
  std::int64_t segment_min = 30;
  std::int64_t segment_max = 70;
  std::int64_t num_sequences = 1000;
  double dirichlet_alpha = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
  /// Reads keys prefixed with `toy.` (e.g. `toy.label_vocab`).
  static ToyConfig from_config(const KvConfig& cfg);
  void write_to(KvConfig& cfg) const;
};

/// Row-stochastic matrix stored row-major.
struct TransitionMatrix {
  std::int64_t vocab = 0;
  std::vector<double> probs;

  double at(std::int64_t from, std::int64_t to) const { return probs[from * vocab + to]; }
};

/// Mean over rows of the total-variation distance between matching rows.
double matrix_distance(const TransitionMatrix& a, const TransitionMatrix& b);

/// k Dirichlet(alpha)-row matrices, pairwise farther apart than 0.05.
std::vector<TransitionMatrix> sample_transition_matrices(std::int64_t k, std::int64_t vocab, Rng& rng,
                                                         double alpha = 0.3);

struct Segment {
  std::int64_t matrix = 0;
  std::int64_t length = 0;
};

/// Walks the given segments. The first state is uniform; later segments
/// continue from the previous segment's final state.
EventSequence generate_from_plan(const std::vector<Segment>& plan, const std::vector<TransitionMatrix>& matrices,
                                 Rng& rng, std::string id);

/// Part count uniform in [parts_min, parts_max], matrices drawn without
/// replacement, lengths uniform in [segment_min, segment_max].
std::vector<Segment> sample_plan(const ToyConfig& config, Rng& rng);

/// Draws a segment plan per the config and walks it.
EventSequence generate_sequence(const ToyConfig& config, const std::vector<TransitionMatrix>& matrices, Rng& rng,
                                std::string id);

Schema toy_schema(const ToyConfig& config);

struct ToyDataset {
  Dataset dataset;
  std::vector<TransitionMatrix> matrices;
};

/// Matrices come from a stream derived from `seed`; each sequence uses its
/// own derived stream, so sequence i does not depend on sequences < i.
ToyDataset generate_dataset(const ToyConfig& config);

}  // namespace htseq::toy
