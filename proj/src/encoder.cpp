// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/encoder.hpp"

#include <cmath>

#include "htseq/error.hpp"

namespace htseq {

void EmbedderConfig::validate() const {
  if (d_model == 0) throw ConfigError("embedder d_model must be positive");
  if (d_pe % 2 != 0 || d_pe > d_model) throw ConfigError("positional width must be even and <= d_model");
  if (!(time.min_scale > 0.0) || time.max_scale < time.min_scale)
    throw ConfigError("time scales must satisfy m > 0 and M >= m");
}

std::vector<double> positional_encoding(double t, std::size_t d_pe, const TimeStats& time) {
  const double m = time.min_scale;
  const double ratio = 5.0 * time.max_scale / m;
  std::vector<double> pe(d_pe);
  for (std::size_t i = 0; i < d_pe; ++i) {
    const auto even = i - (i % 2);
    const double denom = m * std::pow(ratio, static_cast<double>(even) / static_cast<double>(d_pe));
    pe[i] = (i % 2 == 0) ? std::sin(t / denom) : std::cos(t / denom);
  }
  return pe;
}

EventEmbedder::EventEmbedder(const Schema& schema, EmbedderConfig config, ParameterStore& params, Rng& rng,
                             std::string prefix)
    : schema_(schema), config_(config) {
  config_.validate();
  for (auto idx : schema_.categorical()) {
    const auto& field = schema_.fields()[idx];
    std::vector<double> values(static_cast<std::size_t>(field.cardinality) * config_.categorical_dim);
    for (double& v : values) v = rng.normal();
    tables_.push_back(params.add(prefix + field.name + ".table",
                                  ad::Tensor::from({static_cast<std::size_t>(field.cardinality), config_.categorical_dim},
                                                   std::move(values))));
  }
  const auto in = concat_width();
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, in)));
  std::vector<double> w(in * config_.d_model), b(config_.d_model);
  for (double& v : w) v = rng.uniform(-bound, bound);
  for (double& v : b) v = rng.uniform(-bound, bound);
  proj_w_ = params.add(prefix + "proj.w", ad::Tensor::from({in, config_.d_model}, std::move(w)));
  proj_b_ = params.add(prefix + "proj.b", ad::Tensor::from({config_.d_model}, std::move(b)));
}

std::size_t EventEmbedder::concat_width() const {
  return schema_.num_categorical() * config_.categorical_dim + schema_.num_numerical();
}

ad::Tensor EventEmbedder::concat_fields(const std::vector<std::vector<std::int64_t>>& categorical,
                                        const std::vector<std::vector<double>>& numerical, std::size_t n) const {
  if (categorical.size() != schema_.num_categorical() || numerical.size() != schema_.num_numerical())
    throw ShapeError("encode: field count does not match schema");
  std::vector<ad::Tensor> parts;
  for (std::size_t c = 0; c < categorical.size(); ++c) {
    const auto& field = schema_.fields()[schema_.categorical()[c]];
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto code = categorical[c][i];
      if (code < 0 || code >= field.cardinality)
        throw ValidationError("field '" + field.name + "': code " + std::to_string(code) + " out of range");
      rows[i] = static_cast<std::size_t>(code);
    }
    parts.push_back(ad::gather_rows(tables_[c], rows));
  }
  if (!numerical.empty()) {
    std::vector<double> values(n * numerical.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < numerical.size(); ++k) values[i * numerical.size() + k] = numerical[k][i];
    parts.push_back(ad::Tensor::from({n, numerical.size()}, std::move(values)));
  }
  if (parts.empty()) return ad::Tensor::zeros({n, 0});
  return parts.size() == 1 ? parts.front() : ad::concat_cols(parts);
}

ad::Tensor EventEmbedder::encode_events(const std::vector<std::vector<std::int64_t>>& categorical,
                                        const std::vector<std::vector<double>>& numerical, std::size_t n) const {
  return ad::linear(concat_fields(categorical, numerical, n), proj_w_, proj_b_);
}

ad::Tensor EventEmbedder::encode_event(const EventSequence& seq, std::size_t i) const {
  std::vector<std::vector<std::int64_t>> cat;
  std::vector<std::vector<double>> num;
  for (const auto& col : seq.categorical) cat.push_back({col.at(i)});
  for (const auto& col : seq.numerical) num.push_back({col.at(i)});
  return encode_events(cat, num, 1);
}

ad::Tensor EventEmbedder::positional_rows(std::span<const double> timestamps) const {
  const auto d = config_.d_model;
  std::vector<double> values(timestamps.size() * d, 0.0);
  for (std::size_t r = 0; r < timestamps.size(); ++r) {
    auto pe = positional_encoding(timestamps[r], config_.d_pe, config_.time);
    std::copy(pe.begin(), pe.end(), values.begin() + r * d);
  }
  return ad::Tensor::from({timestamps.size(), d}, std::move(values));
}

ad::Tensor EventEmbedder::encode_sequence(const EventSequence& seq) const {
  const auto n = seq.size();
  return ad::add(encode_events(seq.categorical, seq.numerical, n), positional_rows(seq.timestamps));
}

}  // namespace htseq
