// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "htseq/error.hpp"
#include "json.hpp"

namespace htseq {

Objective parse_objective(std::string_view text) {
  if (text == "ntp") return Objective::Ntp;
  if (text == "coles") return Objective::Coles;
  throw ConfigError("train.objective must be ntp or coles, got '" + std::string(text) + "'");
}

std::string_view to_string(Objective objective) { return objective == Objective::Ntp ? "ntp" : "coles"; }

LossWeights TrainConfig::weights_for(const Schema& schema) const {
  KvConfig cfg;
  for (const auto& [name, w] : loss_weights) {
    if (name != "dt" && !std::any_of(schema.fields().begin(), schema.fields().end(),
                                     [&](const FieldSchema& f) { return f.name == name; }))
      throw ConfigError("loss weight for unknown field '" + name + "'");
    cfg.set("loss.weight." + name, format_double(w));
  }
  return LossWeights::from_config(cfg, schema);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (patience < 1) throw ConfigError("train.patience must be at least 1");
  if (sft_epochs < 1) throw ConfigError("train.sft_epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (max_len < 1) throw ConfigError("train.max_len must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (coles_k < 1) throw ConfigError("coles.k must be at least 1");
  if (!(coles_margin > 0.0)) throw ConfigError("coles.margin must be positive");
  ht.validate();
}

TrainConfig TrainConfig::from_config(const KvConfig& cfg) {
  TrainConfig c;
  auto size = [&](std::string_view key, std::size_t fallback) {
    const auto v = cfg.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(std::string(key) + " must be nonnegative");
    return static_cast<std::size_t>(v);
  };
  c.objective = parse_objective(cfg.get_string("train.objective", "ntp"));
  c.epochs = size("train.epochs", c.epochs);
  c.lr = cfg.get_double("train.lr", c.lr);
  c.batch_size = size("train.batch_size", c.batch_size);
  c.max_len = size("train.max_len", c.max_len);
  c.patience = size("train.patience", c.patience);
  c.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
  c.sft_epochs = size("train.sft_epochs", c.sft_epochs);
  c.freeze_backbone = cfg.get_bool("train.freeze_backbone", c.freeze_backbone);
  c.coles_k = size("coles.k", c.coles_k);
  c.coles_margin = cfg.get_double("coles.margin", c.coles_margin);
  c.ht = HTConfig::from_config(cfg);
  for (const auto& [key, value] : cfg.entries())
    if (key.rfind("loss.weight.", 0) == 0) c.loss_weights[key.substr(12)] = parse_double(value, key);
  c.validate();
  return c;
}

void TrainConfig::write_to(KvConfig& cfg) const {
  cfg.set("train.objective", std::string(to_string(objective)));
  cfg.set("train.epochs", std::to_string(epochs));
  cfg.set("train.lr", format_double(lr));
  cfg.set("train.batch_size", std::to_string(batch_size));
  cfg.set("train.max_len", std::to_string(max_len));
  cfg.set("train.patience", std::to_string(patience));
  cfg.set("train.seed", std::to_string(seed));
  cfg.set("train.sft_epochs", std::to_string(sft_epochs));
  cfg.set("train.freeze_backbone", freeze_backbone ? "true" : "false");
  cfg.set("coles.k", std::to_string(coles_k));
  cfg.set("coles.margin", format_double(coles_margin));
  for (const auto& [name, w] : loss_weights) cfg.set("loss.weight." + name, format_double(w));
  ht.write_to(cfg);
}

namespace {

void check_finite(double loss, std::string_view stage, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss))
    throw NumericError(std::string(stage) + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch));
}

void step(HtTransformer& model, Adam& adam, ad::Tensor& loss) {
  model.parameters().zero_grad();
  loss.backward();
  adam.step(model.parameters());
}

struct LossSum {
  double total = 0.0;
  double weight = 0.0;
  void add(double value, double w) {
    total += value * w;
    weight += w;
  }
  double mean() const { return weight > 0.0 ? total / weight : 0.0; }
};

// One NTP step or evaluation over a batch; returns (loss tensor, target count).
std::pair<ad::Tensor, std::size_t> ntp_batch(const HtTransformer& model, const PaddedBatch& batch,
                                             const TrainConfig& config, const LossWeights& weights, Rng& ht_rng,
                                             Rng* dropout_rng) {
  const auto plans = plan_batch(batch, config.ht, ht_rng);
  const auto aug = apply_plans(batch, plans);
  const auto masks = build_masks(aug, config.ht.selection, ht_rng);
  const auto packed = model.pack(batch, aug, masks);
  const auto targets = ntp_targets(batch, packed);
  if (targets.size() == 0) return {ad::Tensor(), 0};
  const auto hidden = model.forward(packed, dropout_rng);
  auto loss = ntp_loss(model.ntp_predict(ad::gather_rows(hidden.final(), targets.sources)), batch, targets, weights);
  return {loss, targets.size()};
}

// Sequences grouped into CoLES batches of whole entities.
std::vector<std::vector<const EventSequence*>> coles_groups(const Dataset& data, std::size_t batch_size,
                                                            Rng* shuffle) {
  std::vector<const EventSequence*> usable;
  for (const auto& seq : data.sequences)
    if (seq.size() >= 2) usable.push_back(&seq);
  if (shuffle) shuffle->shuffle(std::span<const EventSequence*>(usable));
  std::vector<std::vector<const EventSequence*>> groups;
  for (std::size_t i = 0; i < usable.size(); i += batch_size) {
    std::vector<const EventSequence*> g(usable.begin() + static_cast<std::ptrdiff_t>(i),
                                        usable.begin() + static_cast<std::ptrdiff_t>(std::min(usable.size(), i + batch_size)));
    if (g.size() >= 2) groups.push_back(std::move(g));
  }
  return groups;
}

ad::Tensor coles_batch(const HtTransformer& model, const std::vector<const EventSequence*>& group,
                       const TrainConfig& config, Rng& sample_rng, Rng* dropout_rng) {
  std::vector<EventSequence> slices;
  for (const auto* seq : group)
    for (auto& s : sample_subsequences(*seq, config.coles_k, sample_rng)) slices.push_back(std::move(s));
  std::vector<const EventSequence*> rows;
  for (const auto& s : slices) rows.push_back(&s);
  const auto batch = make_padded_batch(rows, model.schema(), config.max_len);
  const auto aug = causal_layouts(batch);
  const auto masks = build_masks(aug, HtSelection::Last, sample_rng);
  const auto packed = model.pack(batch, aug, masks);
  const auto hidden = model.forward(packed, dropout_rng);
  return coles_batch_loss(model.extract_embedding(hidden, packed, EmbeddingStrategy::LastToken), batch.ids,
                          config.coles_margin);
}

std::uint64_t epoch_seed(std::uint64_t seed, std::string_view stream, std::size_t epoch) {
  return Rng::derive(Rng::derive(seed, stream), static_cast<std::uint64_t>(epoch));
}

}  // namespace

double validation_loss(const HtTransformer& model, const Dataset& val, const TrainConfig& config) {
  ad::NoGradGuard no_grad;
  LossSum sum;
  if (config.objective == Objective::Ntp) {
    const auto weights = config.weights_for(model.schema());
    Rng ht_rng(Rng::derive(config.seed, "val.ht"));
    for (const auto& batch : make_ordered_batches(val, config.batch_size, config.max_len)) {
      auto [loss, count] = ntp_batch(model, batch, config, weights, ht_rng, nullptr);
      if (count > 0) sum.add(loss.item(), static_cast<double>(count));
    }
  } else {
    Rng sample_rng(Rng::derive(config.seed, "val.coles"));
    for (const auto& group : coles_groups(val, config.batch_size, nullptr))
      sum.add(coles_batch(model, group, config, sample_rng, nullptr).item(), static_cast<double>(group.size()));
  }
  if (sum.weight == 0.0) throw ValidationError("validation split yields no loss terms");
  return sum.mean();
}

TrainResult pretrain(HtTransformer& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
                     std::ostream* log) {
  config.validate();
  const auto weights = config.weights_for(model.schema());
  Adam adam(AdamConfig{config.lr});
  Rng ht_rng(Rng::derive(config.seed, "train.ht"));
  Rng dropout_rng(Rng::derive(config.seed, "train.dropout"));
  Rng sample_rng(Rng::derive(config.seed, "train.coles"));
  const auto stage = config.objective == Objective::Ntp ? "ntp pretraining" : "coles pretraining";

  TrainResult result;
  result.best_val = validation_loss(model, val, config);
  result.history.push_back({0, 0.0, result.best_val});
  if (log) *log << stage << " epoch 0 val_loss " << format_double(result.best_val) << '\n';
  auto best = model.parameters().snapshot();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    LossSum train_loss;
    std::size_t index = 0;
    if (config.objective == Objective::Ntp) {
      for (const auto& batch : make_batches(train, config.batch_size, config.max_len,
                                            epoch_seed(config.seed, "train.shuffle", epoch))) {
        auto [loss, count] = ntp_batch(model, batch, config, weights, ht_rng, &dropout_rng);
        ++index;
        if (count == 0) continue;
        check_finite(loss.item(), stage, epoch, index);
        train_loss.add(loss.item(), static_cast<double>(count));
        step(model, adam, loss);
      }
    } else {
      Rng shuffle(epoch_seed(config.seed, "train.shuffle", epoch));
      for (const auto& group : coles_groups(train, config.batch_size, &shuffle)) {
        auto loss = coles_batch(model, group, config, sample_rng, &dropout_rng);
        check_finite(loss.item(), stage, epoch, ++index);
        train_loss.add(loss.item(), static_cast<double>(group.size()));
        step(model, adam, loss);
      }
    }
    const double val_loss = validation_loss(model, val, config);
    check_finite(val_loss, stage, epoch, 0);
    result.history.push_back({epoch, train_loss.mean(), val_loss});
    if (log)
      *log << stage << " epoch " << epoch << " train_loss " << format_double(train_loss.mean()) << " val_loss "
           << format_double(val_loss) << '\n';
    if (val_loss < result.best_val) {
      result.best_val = val_loss;
      result.best_epoch = epoch;
      best = model.parameters().snapshot();
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  model.parameters().restore(best);
  model.parameters().zero_grad();
  return result;
}

std::size_t task_classes(const std::vector<const Dataset*>& datasets, const std::string& task) {
  std::int64_t top = -1;
  for (const auto* data : datasets)
    for (const auto& seq : data->sequences) {
      auto it = seq.labels.find(task);
      if (it == seq.labels.end()) throw ValidationError("sequence '" + seq.id + "' has no label for task '" + task + "'");
      if (it->second < 0) throw ValidationError("negative label for task '" + task + "'");
      top = std::max(top, it->second);
    }
  if (top < 1) throw ValidationError("task '" + task + "' needs at least two classes");
  return static_cast<std::size_t>(top + 1);
}

namespace {

std::vector<std::int64_t> batch_labels(const PaddedBatch& batch, const std::string& task) {
  std::vector<std::int64_t> labels;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    auto it = batch.labels[b].find(task);
    if (it == batch.labels[b].end())
      throw ValidationError("sequence '" + batch.ids[b] + "' has no label for task '" + task + "'");
    labels.push_back(it->second);
  }
  return labels;
}

PackedBatch inference_pack(const HtTransformer& model, const PaddedBatch& batch) {
  Rng unused(0);
  const auto aug = inference_layouts(batch);
  return model.pack(batch, aug, build_masks(aug, HtSelection::Last, unused));
}

double accuracy_of(const std::vector<std::int64_t>& predicted, const Dataset& data, const std::string& task) {
  if (data.empty()) throw ValidationError("accuracy of an empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    auto it = data.sequences[i].labels.find(task);
    if (it == data.sequences[i].labels.end())
      throw ValidationError("sequence '" + data.sequences[i].id + "' has no label for task '" + task + "'");
    hits += predicted[i] == it->second;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace

std::vector<std::vector<double>> predict_probabilities(const HtTransformer& model, const Dataset& data,
                                                       const TrainConfig& config) {
  ad::NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  for (const auto& batch : make_ordered_batches(data, config.batch_size, config.max_len)) {
    const auto packed = inference_pack(model, batch);
    const auto logits = model.classify(model.forward(packed), packed);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      std::vector<double> p(logits.cols());
      double top = -INFINITY, z = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) top = std::max(top, logits.at(r, c));
      for (std::size_t c = 0; c < p.size(); ++c) z += (p[c] = std::exp(logits.at(r, c) - top));
      for (auto& v : p) v /= z;
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<std::int64_t> predict_classes(const HtTransformer& model, const Dataset& data, const TrainConfig& config) {
  std::vector<std::int64_t> out;
  for (const auto& p : predict_probabilities(model, data, config))
    out.push_back(static_cast<std::int64_t>(std::max_element(p.begin(), p.end()) - p.begin()));
  return out;
}

TrainResult finetune(HtTransformer& model, const Dataset& train, const Dataset& val, const std::string& task,
                     std::size_t num_classes, std::size_t epochs, const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (epochs < 1) throw ConfigError("fine-tuning needs at least one epoch");
  task_classes({&train}, task);
  model.reset_classifier(num_classes, Rng::derive(config.seed, "sft.head." + task));
  std::vector<std::pair<ad::Tensor, bool>> frozen;
  if (config.freeze_backbone)
    for (auto& [name, tensor] : model.parameters().items())
      if (model.is_backbone_parameter(name)) {
        frozen.emplace_back(tensor, tensor.requires_grad());
        tensor.set_requires_grad(false);
      }
  Adam adam(AdamConfig{config.lr});
  Rng dropout_rng(Rng::derive(config.seed, "sft.dropout"));
  TrainResult result;
  result.best_val = accuracy_of(predict_classes(model, val, config), val, task);
  result.history.push_back({0, 0.0, result.best_val});
  if (log) *log << "fine-tuning " << task << " epoch 0 val_accuracy " << format_double(result.best_val) << '\n';
  auto best = model.parameters().snapshot();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    LossSum train_loss;
    std::size_t index = 0;
    for (const auto& batch : make_batches(train, config.batch_size, config.max_len,
                                          epoch_seed(config.seed, "sft.shuffle", epoch))) {
      const auto labels = batch_labels(batch, task);
      const auto packed = inference_pack(model, batch);
      auto loss = supervised_loss(model.classify(model.forward(packed, &dropout_rng), packed), labels);
      check_finite(loss.item(), "fine-tuning", epoch, ++index);
      train_loss.add(loss.item(), static_cast<double>(batch.batch_size));
      step(model, adam, loss);
    }
    const double acc = accuracy_of(predict_classes(model, val, config), val, task);
    result.history.push_back({epoch, train_loss.mean(), acc});
    if (log)
      *log << "fine-tuning " << task << " epoch " << epoch << " train_loss " << format_double(train_loss.mean())
           << " val_accuracy " << format_double(acc) << '\n';
    if (acc > result.best_val) {
      result.best_val = acc;
      result.best_epoch = epoch;
      best = model.parameters().snapshot();
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  model.parameters().restore(best);
  model.parameters().zero_grad();
  for (auto& [tensor, flag] : frozen) tensor.set_requires_grad(flag);
  return result;
}

std::vector<EmbeddingRecord> extract_embeddings(const HtTransformer& model, const Dataset& data,
                                                EmbeddingStrategy strategy, std::size_t batch_size,
                                                std::size_t max_len) {
  ad::NoGradGuard no_grad;
  std::vector<EmbeddingRecord> out;
  Rng unused(0);
  for (const auto& batch : make_ordered_batches(data, batch_size, max_len)) {
    const auto aug = needs_history_token(strategy) ? inference_layouts(batch) : causal_layouts(batch);
    const auto packed = model.pack(batch, aug, build_masks(aug, HtSelection::Last, unused));
    const auto emb = model.extract_embedding(model.forward(packed), packed, strategy);
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
      EmbeddingRecord rec;
      rec.id = batch.ids[b];
      rec.labels = batch.labels[b];
      rec.vector.assign(emb.data().begin() + static_cast<std::ptrdiff_t>(b * emb.cols()),
                        emb.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * emb.cols()));
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::string embeddings_to_ndjson(const std::vector<EmbeddingRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["vector"] = rec.vector;
    j["labels"] = nlohmann::ordered_json::object();
    for (const auto& [task, label] : rec.labels) j["labels"][task] = label;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<EmbeddingRecord> parse_embeddings(const std::string& text) {
  std::vector<EmbeddingRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EmbeddingRecord rec;
      rec.id = j.at("id").get<std::string>();
      rec.vector = j.at("vector").get<std::vector<double>>();
      if (j.contains("labels"))
        for (const auto& [task, label] : j.at("labels").items()) rec.labels[task] = label.get<std::int64_t>();
      if (!out.empty() && out.front().vector.size() != rec.vector.size())
        throw ParseError("embedding width differs from the first record", number);
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), number);
    }
  }
  return out;
}

void save_embeddings(const std::vector<EmbeddingRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << embeddings_to_ndjson(records);
}

std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_embeddings(buffer.str());
}

}  // namespace htseq
