// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htseq/kvconfig.hpp"
#include "htseq/model.hpp"
#include "htseq/rng.hpp"
#include "htseq/seqdata.hpp"
#include "htseq/tensor.hpp"

namespace testutil {

inline htseq::ad::Tensor random_tensor(htseq::ad::Shape shape, htseq::Rng& rng, bool grad = true, double scale = 1.0) {
  std::vector<double> v(htseq::ad::shape_numel(shape));
  for (double& x : v) x = rng.normal(0.0, scale);
  return htseq::ad::Tensor::from(std::move(shape), std::move(v), grad);
}

/// Two categorical fields and one numerical field.
inline htseq::Schema mixed_schema() {
  return htseq::Schema({{"kind", htseq::FieldKind::Categorical, 5},
                        {"amount", htseq::FieldKind::Numerical, 0},
                        {"place", htseq::FieldKind::Categorical, 3}});
}

inline htseq::EventSequence random_sequence(const htseq::Schema& schema, std::size_t n, htseq::Rng& rng,
                                            std::string id) {
  htseq::EventSequence seq;
  seq.id = std::move(id);
  double t = rng.uniform(0.0, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    seq.timestamps.push_back(t);
    t += rng.uniform(0.0, 3.0);
  }
  for (auto idx : schema.categorical()) {
    std::vector<std::int64_t> codes(n);
    for (auto& c : codes) c = rng.uniform_int(0, schema.fields()[idx].cardinality - 1);
    seq.categorical.push_back(std::move(codes));
  }
  for (std::size_t k = 0; k < schema.num_numerical(); ++k) {
    std::vector<double> values(n);
    for (auto& v : values) v = rng.normal();
    seq.numerical.push_back(std::move(values));
  }
  seq.labels["task"] = rng.uniform_int(0, 2);
  return seq;
}

inline htseq::Dataset random_dataset(const htseq::Schema& schema, std::size_t count, std::size_t min_len,
                                     std::size_t max_len, std::uint64_t seed) {
  htseq::Rng rng(seed);
  htseq::Dataset data;
  data.schema = schema;
  for (std::size_t i = 0; i < count; ++i) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(min_len),
                                                            static_cast<std::int64_t>(max_len)));
    data.sequences.push_back(random_sequence(schema, n, rng, "s" + std::to_string(i)));
  }
  return data;
}

inline htseq::TransformerConfig tiny_model(std::size_t layers = 2, std::size_t d = 8) {
  htseq::TransformerConfig c;
  c.layers = layers;
  c.d_model = d;
  c.heads = 2;
  c.ff_dim = 2 * d;
  c.dropout = 0.0;
  c.categorical_dim = 3;
  return c;
}

/// Small toy experiment that trains every method in a few seconds.
inline htseq::KvConfig tiny_experiment() {
  return htseq::KvConfig::parse(
      "toy.num_sequences = 60\n"
      "toy.segment_min = 4\n"
      "toy.segment_max = 8\n"
      "model.layers = 1\n"
      "model.d_model = 8\n"
      "model.heads = 2\n"
      "model.ff_dim = 16\n"
      "model.categorical_dim = 4\n"
      "train.epochs = 2\n"
      "train.sft_epochs = 2\n"
      "train.batch_size = 16\n"
      "coles.k = 3\n"
      "experiment.seeds = 0, 1\n"
      "experiment.methods = supervised, ntp_last, ntp_avg, coles, ntp_ht, ntp_cls, ht_sft\n"
      "downstream.max_iterations = 200\n");
}

}  // namespace testutil
