// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/model.hpp"

#include <cmath>

#include "htseq/error.hpp"

namespace htseq {

void TransformerConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    throw ConfigError("model.d_model must be a positive multiple of model.heads");
  if (ff_dim == 0) throw ConfigError("model.ff_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (d_model % 2 != 0) throw ConfigError("model.d_model must be even for the time encoding");
}

TransformerConfig TransformerConfig::from_config(const KvConfig& cfg) {
  TransformerConfig c;
  c.layers = static_cast<std::size_t>(cfg.get_int("model.layers", static_cast<std::int64_t>(c.layers)));
  c.d_model = static_cast<std::size_t>(cfg.get_int("model.d_model", static_cast<std::int64_t>(c.d_model)));
  c.heads = static_cast<std::size_t>(cfg.get_int("model.heads", static_cast<std::int64_t>(c.heads)));
  c.ff_dim = static_cast<std::size_t>(cfg.get_int("model.ff_dim", static_cast<std::int64_t>(c.ff_dim)));
  c.dropout = cfg.get_double("model.dropout", c.dropout);
  c.categorical_dim =
      static_cast<std::size_t>(cfg.get_int("model.categorical_dim", static_cast<std::int64_t>(c.categorical_dim)));
  c.validate();
  return c;
}

void TransformerConfig::write_to(KvConfig& cfg) const {
  cfg.set("model.layers", std::to_string(layers));
  cfg.set("model.d_model", std::to_string(d_model));
  cfg.set("model.heads", std::to_string(heads));
  cfg.set("model.ff_dim", std::to_string(ff_dim));
  cfg.set("model.dropout", format_double(dropout));
  cfg.set("model.categorical_dim", std::to_string(categorical_dim));
}

EmbeddingStrategy parse_strategy(std::string_view text) {
  if (text == "ht") return EmbeddingStrategy::HistoryToken;
  if (text == "last") return EmbeddingStrategy::LastToken;
  if (text == "mean") return EmbeddingStrategy::MeanTokens;
  if (text == "cls") return EmbeddingStrategy::Cls;
  throw ConfigError("embedding strategy must be ht, last, mean or cls, got '" + std::string(text) + "'");
}

std::string_view to_string(EmbeddingStrategy strategy) {
  switch (strategy) {
    case EmbeddingStrategy::HistoryToken: return "ht";
    case EmbeddingStrategy::LastToken: return "last";
    case EmbeddingStrategy::MeanTokens: return "mean";
    case EmbeddingStrategy::Cls: return "cls";
  }
  return "?";
}

bool needs_history_token(EmbeddingStrategy strategy) {
  return strategy == EmbeddingStrategy::HistoryToken || strategy == EmbeddingStrategy::Cls;
}

namespace {

ad::Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng) {
  std::vector<double> values(ad::shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return ad::Tensor::from(std::move(shape), std::move(values));
}

ad::Tensor filled(ad::Shape shape, double value) {
  return ad::Tensor::from(shape, std::vector<double>(ad::shape_numel(shape), value));
}

}  // namespace

HtTransformer::HtTransformer(Schema schema, TransformerConfig config, TimeStats time, std::uint64_t seed)
    : schema_(std::move(schema)), config_(config), time_(time) {
  config_.validate();
  Rng rng(Rng::derive(seed, "model.init"));
  const auto d = config_.d_model;
  EmbedderConfig ec;
  ec.categorical_dim = config_.categorical_dim;
  ec.d_model = d;
  ec.d_pe = d;
  ec.time = time_;
  embedder_ = std::make_unique<EventEmbedder>(schema_, ec, params_, rng);

  std::vector<double> ht(d);
  for (double& v : ht) v = rng.normal();
  history_ = params_.add("ht.embedding", ad::Tensor::from({1, d}, std::move(ht)));

  const double bound_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double bound_ff = 1.0 / std::sqrt(static_cast<double>(config_.ff_dim));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const auto p = "block" + std::to_string(l) + ".";
    Block b;
    b.ln1_g = params_.add(p + "ln1.g", filled({d}, 1.0));
    b.ln1_b = params_.add(p + "ln1.b", filled({d}, 0.0));
    b.qkv_w = params_.add(p + "attn.qkv.w", uniform_tensor({d, 3 * d}, bound_d, rng));
    b.qkv_b = params_.add(p + "attn.qkv.b", filled({3 * d}, 0.0));
    b.out_w = params_.add(p + "attn.out.w", uniform_tensor({d, d}, bound_d, rng));
    b.out_b = params_.add(p + "attn.out.b", filled({d}, 0.0));
    b.ln2_g = params_.add(p + "ln2.g", filled({d}, 1.0));
    b.ln2_b = params_.add(p + "ln2.b", filled({d}, 0.0));
    b.ff1_w = params_.add(p + "ff1.w", uniform_tensor({d, config_.ff_dim}, bound_d, rng));
    b.ff1_b = params_.add(p + "ff1.b", uniform_tensor({config_.ff_dim}, bound_d, rng));
    b.ff2_w = params_.add(p + "ff2.w", uniform_tensor({config_.ff_dim, d}, bound_ff, rng));
    b.ff2_b = params_.add(p + "ff2.b", uniform_tensor({d}, bound_ff, rng));
    blocks_.push_back(std::move(b));
  }
  final_g_ = params_.add("final_ln.g", filled({d}, 1.0));
  final_b_ = params_.add("final_ln.b", filled({d}, 0.0));

  head_width_ = 1 + schema_.num_numerical();
  for (auto idx : schema_.categorical()) head_width_ += static_cast<std::size_t>(schema_.fields()[idx].cardinality);
  head_w_ = params_.add("head.ntp.w", uniform_tensor({d, head_width_}, bound_d, rng));
  head_b_ = params_.add("head.ntp.b", uniform_tensor({head_width_}, bound_d, rng));
}

void HtTransformer::reset_classifier(std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("classifier needs at least two classes");
  params_.remove_prefix("head.cls.");
  Rng rng(Rng::derive(seed, "model.classifier"));
  const auto d = config_.d_model;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  cls_w_ = params_.add("head.cls.w", uniform_tensor({d, num_classes}, bound, rng));
  cls_b_ = params_.add("head.cls.b", uniform_tensor({num_classes}, bound, rng));
  num_classes_ = num_classes;
}

bool HtTransformer::is_backbone_parameter(const std::string& name) const { return name.rfind("head.cls.", 0) != 0; }

PackedBatch HtTransformer::pack(const PaddedBatch& batch, const AugmentedBatch& layouts,
                                const std::vector<AttentionMask>& masks) const {
  if (layouts.layouts.size() != batch.batch_size || masks.size() != batch.batch_size)
    throw ShapeError("pack: one layout and one mask per batch row required");
  PackedBatch packed;
  packed.layouts = layouts;

  // Event rows in packed order, gathered from the padded batch.
  std::vector<std::size_t> event_cells;
  std::vector<std::size_t> token_source;  // row of [events; history] feeding each packed token
  std::vector<double> token_times;
  auto pattern = std::make_shared<ad::AttentionPattern>();
  std::size_t history_tokens = 0;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    const auto& layout = layouts.layouts[b];
    layout.validate();
    if (masks[b].size() != layout.size()) throw ShapeError("pack: mask size does not match layout");
    const auto n = layout.non_pad_length();
    packed.offsets.push_back(token_source.size());
    packed.lengths.push_back(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (layout.tags[i] == TokenTag::Event) {
        const auto e = static_cast<std::size_t>(layout.event_index[i]);
        if (e >= batch.lengths[b]) throw ShapeError("pack: event index beyond row length");
        token_source.push_back(event_cells.size());
        event_cells.push_back(batch.index(b, e));
      } else {
        token_source.push_back(SIZE_MAX);
        ++history_tokens;
      }
      token_times.push_back(layout.timestamps[i]);
    }
    pattern->append_block(masks[b], n);
  }
  const auto n_events = event_cells.size();
  for (auto& src : token_source)
    if (src == SIZE_MAX) src = n_events;

  std::vector<std::vector<std::int64_t>> cat(schema_.num_categorical(), std::vector<std::int64_t>(n_events));
  std::vector<std::vector<double>> num(schema_.num_numerical(), std::vector<double>(n_events));
  for (std::size_t r = 0; r < n_events; ++r) {
    for (std::size_t c = 0; c < cat.size(); ++c) cat[c][r] = batch.categorical[c][event_cells[r]];
    for (std::size_t k = 0; k < num.size(); ++k) num[k][r] = batch.numerical[k][event_cells[r]];
  }
  ad::Tensor events = embedder_->encode_events(cat, num, n_events);
  ad::Tensor sources = history_tokens > 0 ? ad::concat_rows({events, history_}) : events;
  ad::Tensor tokens = ad::gather_rows(sources, token_source);
  packed.tokens = ad::add(tokens, embedder_->positional_rows(token_times));
  packed.pattern = std::move(pattern);
  return packed;
}

HiddenStates HtTransformer::forward(const ad::Tensor& tokens, std::shared_ptr<const ad::AttentionPattern> pattern,
                                    Rng* dropout_rng) const {
  if (tokens.cols() != config_.d_model) throw ShapeError("forward: token width does not match d_model");
  if (!pattern || pattern->tokens != tokens.rows()) throw ShapeError("forward: attention pattern does not match tokens");
  const auto d = config_.d_model;
  const double rate = dropout_rng ? config_.dropout : 0.0;
  HiddenStates out;
  out.input = tokens;
  ad::Tensor h = tokens;
  for (const auto& b : blocks_) {
    ad::Tensor a = ad::layer_norm(h, b.ln1_g, b.ln1_b);
    ad::Tensor qkv = ad::linear(a, b.qkv_w, b.qkv_b);
    ad::Tensor att = ad::masked_attention(ad::slice_cols(qkv, 0, d), ad::slice_cols(qkv, d, 2 * d),
                                          ad::slice_cols(qkv, 2 * d, 3 * d), pattern, config_.heads);
    ad::Tensor o = ad::linear(att, b.out_w, b.out_b);
    if (rate > 0.0) o = ad::dropout(o, rate, *dropout_rng);
    h = ad::add(h, o);
    ad::Tensor f = ad::relu(ad::linear(ad::layer_norm(h, b.ln2_g, b.ln2_b), b.ff1_w, b.ff1_b));
    f = ad::linear(f, b.ff2_w, b.ff2_b);
    if (rate > 0.0) f = ad::dropout(f, rate, *dropout_rng);
    h = ad::add(h, f);
    out.layers.push_back(h);
  }
  return out;
}

ad::Tensor HtTransformer::final_norm(const ad::Tensor& x) const { return ad::layer_norm(x, final_g_, final_b_); }

NtpOutputs HtTransformer::ntp_predict(const ad::Tensor& hidden) const {
  ad::Tensor all = ad::linear(final_norm(hidden), head_w_, head_b_);
  NtpOutputs out;
  std::size_t col = 0;
  for (auto idx : schema_.categorical()) {
    const auto card = static_cast<std::size_t>(schema_.fields()[idx].cardinality);
    out.categorical.push_back(ad::slice_cols(all, col, col + card));
    col += card;
  }
  for (std::size_t k = 0; k < schema_.num_numerical(); ++k, ++col) out.numerical.push_back(ad::slice_cols(all, col, col + 1));
  out.dt = ad::slice_cols(all, col, col + 1);
  return out;
}

ad::Tensor HtTransformer::extract_embedding(const HiddenStates& hidden, const PackedBatch& packed,
                                            EmbeddingStrategy strategy) const {
  const auto rows = packed.offsets.size();
  std::vector<std::size_t> last(rows);
  for (std::size_t b = 0; b < rows; ++b) {
    if (packed.lengths[b] == 0) throw ValidationError("cannot embed an empty row");
    last[b] = packed.offsets[b] + packed.lengths[b] - 1;
    if (needs_history_token(strategy)) {
      const auto& layout = packed.layouts.layouts[b];
      if (layout.tags[packed.lengths[b] - 1] != TokenTag::History)
        throw ValidationError("history-token embedding needs a History token at the end of every row");
    }
  }
  switch (strategy) {
    case EmbeddingStrategy::HistoryToken:
    case EmbeddingStrategy::Cls: {
      if (hidden.layers.empty()) return ad::gather_rows(hidden.input, last);
      std::vector<ad::Tensor> per_layer;
      for (const auto& layer : hidden.layers) per_layer.push_back(ad::gather_rows(layer, last));
      ad::Tensor acc = per_layer.front();
      for (std::size_t l = 1; l < per_layer.size(); ++l) acc = ad::add(acc, per_layer[l]);
      return per_layer.size() == 1 ? acc : ad::scale(acc, 1.0 / static_cast<double>(per_layer.size()));
    }
    case EmbeddingStrategy::LastToken:
      return ad::gather_rows(hidden.final(), last);
    case EmbeddingStrategy::MeanTokens: {
      std::vector<ad::Tensor> means;
      for (std::size_t b = 0; b < rows; ++b) {
        std::vector<std::size_t> events;
        const auto& layout = packed.layouts.layouts[b];
        for (std::size_t i = 0; i < packed.lengths[b]; ++i)
          if (layout.tags[i] == TokenTag::Event) events.push_back(packed.offsets[b] + i);
        if (events.empty()) throw ValidationError("mean embedding of a row without events");
        means.push_back(ad::mean_rows(ad::gather_rows(hidden.final(), events)));
      }
      return ad::concat_rows(means);
    }
  }
  throw ConfigError("unknown embedding strategy");
}

ad::Tensor HtTransformer::classify(const HiddenStates& hidden, const PackedBatch& packed) const {
  if (num_classes_ == 0) throw ConfigError("model has no classification head");
  std::vector<std::size_t> last;
  for (std::size_t b = 0; b < packed.offsets.size(); ++b) last.push_back(packed.offsets[b] + packed.lengths[b] - 1);
  return ad::linear(final_norm(ad::gather_rows(hidden.final(), last)), cls_w_, cls_b_);
}

HtTransformer HtTransformer::clone() const {
  HtTransformer copy(schema_, config_, time_, 0);
  if (num_classes_ > 0) copy.reset_classifier(num_classes_, 0);
  copy.params_.restore(params_.snapshot());
  return copy;
}

void HtTransformer::save(const std::filesystem::path& path) const {
  save_checkpoint(params_, path);
  KvConfig meta;
  config_.write_to(meta);
  meta.set("model.num_classes", std::to_string(num_classes_));
  meta.set("time.m", format_double(time_.min_scale));
  meta.set("time.M", format_double(time_.max_scale));
  const auto schema_cfg = schema_.to_config();
  for (const auto& [name, kind] : schema_cfg.entries()) meta.set("schema." + name, kind);
  meta.save(path.string() + ".meta");
}

HtTransformer HtTransformer::load(const std::filesystem::path& path) {
  const auto meta = KvConfig::load(path.string() + ".meta");
  KvConfig schema_cfg;
  for (const auto& [key, value] : meta.entries())
    if (key.rfind("schema.", 0) == 0) schema_cfg.set(key.substr(7), value);
  TimeStats time{meta.get_double("time.m"), meta.get_double("time.M")};
  HtTransformer model(Schema::from_config(schema_cfg), TransformerConfig::from_config(meta), time, 0);
  if (auto classes = meta.get_int("model.num_classes", 0); classes > 0)
    model.reset_classifier(static_cast<std::size_t>(classes), 0);
  load_checkpoint(model.params_, path);
  return model;
}

}  // namespace htseq
