// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

#include "htseq/error.hpp"

namespace htseq {

namespace {

Metric parse_metric(std::string_view text) {
  if (text == "accuracy") return Metric::Accuracy;
  if (text == "roc_auc") return Metric::RocAuc;
  throw ConfigError("experiment.metric must be accuracy or roc_auc, got '" + std::string(text) + "'");
}

std::string metric_name(Metric metric) { return metric == Metric::Accuracy ? "accuracy" : "roc_auc"; }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <class F>
auto run_stage(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    throw Error("stage '" + name + "' failed: " + e.what());
  }
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of no values");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string fixed(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

std::vector<std::int64_t> labels_of(const std::vector<EmbeddingRecord>& records, const std::string& task) {
  std::vector<std::int64_t> out;
  for (const auto& rec : records) {
    auto it = rec.labels.find(task);
    if (it == rec.labels.end()) throw ValidationError("embedding '" + rec.id + "' has no label for task '" + task + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::int64_t> dataset_labels(const Dataset& data, const std::string& task) {
  std::vector<std::int64_t> out;
  for (const auto& seq : data.sequences) {
    auto it = seq.labels.find(task);
    if (it == seq.labels.end()) throw ValidationError("sequence '" + seq.id + "' has no label for task '" + task + "'");
    out.push_back(it->second);
  }
  return out;
}

double score_probabilities(const std::vector<std::vector<double>>& probs, const std::vector<std::int64_t>& labels,
                           Metric metric) {
  if (metric == Metric::RocAuc) {
    std::vector<double> scores;
    for (const auto& p : probs) {
      if (p.size() != 2) throw ValidationError("roc_auc needs a binary task");
      scores.push_back(p[1]);
    }
    return roc_auc(scores, labels);
  }
  std::vector<std::int64_t> predicted;
  for (const auto& p : probs) predicted.push_back(static_cast<std::int64_t>(std::max_element(p.begin(), p.end()) - p.begin()));
  return accuracy(predicted, labels);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_config(const KvConfig& cfg) {
  ExperimentConfig c;
  c.raw = cfg;
  c.data_source = cfg.get_string("data.source", c.data_source);
  if (c.data_source != "toy" && c.data_source != "file")
    throw ConfigError("data.source must be toy or file, got '" + c.data_source + "'");
  c.data_path = cfg.get_string("data.path", "");
  c.schema_path = cfg.get_string("data.schema", "");
  if (c.data_source == "file" && (c.data_path.empty() || c.schema_path.empty()))
    throw ConfigError("data.source = file needs data.path and data.schema");
  c.toy = toy::ToyConfig::from_config(cfg);
  const auto split = cfg.get_doubles("data.split", {c.split[0], c.split[1], c.split[2]});
  if (split.size() != 3) throw ConfigError("data.split needs three fractions");
  c.split = {split[0], split[1], split[2]};
  c.split_seed = static_cast<std::uint64_t>(cfg.get_int("data.split_seed", 0));
  c.standardize = cfg.get_bool("data.standardize", false);
  if (cfg.contains("experiment.seeds")) {
    c.seeds.clear();
    for (auto s : cfg.get_ints("experiment.seeds", {})) {
      if (s < 0) throw ConfigError("experiment.seeds must be nonnegative");
      c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  if (c.seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  c.methods = cfg.get_strings("experiment.methods", c.methods);
  for (const auto& m : c.methods)
    if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end())
      throw ConfigError("unknown method '" + m + "' in experiment.methods");
  c.tasks = cfg.get_strings("experiment.tasks", {});
  c.metric = parse_metric(cfg.get_string("experiment.metric", "accuracy"));
  c.downstream.l2 = cfg.get_double("downstream.l2", c.downstream.l2);
  c.downstream.grad_tol = cfg.get_double("downstream.grad_tol", c.downstream.grad_tol);
  c.downstream.max_iterations =
      static_cast<std::size_t>(cfg.get_int("downstream.max_iterations", static_cast<std::int64_t>(c.downstream.max_iterations)));
  c.model = TransformerConfig::from_config(cfg);
  c.train = TrainConfig::from_config(cfg);
  c.sweep_f = cfg.get_doubles("sweep.f", c.sweep_f);
  c.sweep_p = cfg.get_doubles("sweep.p", c.sweep_p);
  c.sweep_mode = cfg.get_string("sweep.mode", c.sweep_mode);
  if (c.sweep_mode != "axes" && c.sweep_mode != "grid") throw ConfigError("sweep.mode must be axes or grid");
  return c;
}

std::string ExperimentConfig::fingerprint() const {
  auto entries = raw.entries();
  std::sort(entries.begin(), entries.end());
  std::string text;
  for (const auto& [k, v] : entries) text += k + "=" + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  Dataset all;
  if (config.data_source == "toy") {
    out.schema = toy::toy_schema(config.toy);
    all = toy::generate_dataset(config.toy).dataset;
  } else {
    out.schema = Schema::load(config.schema_path);
    all = load_dataset(config.data_path, out.schema);
  }
  out.split = split_dataset(all, config.split, config.split_seed);
  if (out.split.train.empty() || out.split.validation.empty() || out.split.test.empty())
    throw ConfigError("every split must contain at least one sequence");
  if (config.standardize) {
    const auto stats = compute_numerical_stats(out.split.train);
    standardize_numerical(out.split.train, stats);
    standardize_numerical(out.split.validation, stats);
    standardize_numerical(out.split.test, stats);
  }
  out.time = compute_time_stats(out.split.train);
  out.tasks = config.tasks;
  if (out.tasks.empty() && config.data_source == "toy") out.tasks = {toy::kLocalTask, toy::kGlobalTask};
  return out;
}

double evaluate_embeddings(const std::vector<EmbeddingRecord>& train, const std::vector<EmbeddingRecord>& test,
                           const std::string& task, Metric metric, const LogisticConfig& config) {
  const auto train_labels = labels_of(train, task);
  const auto test_labels = labels_of(test, task);
  std::int64_t top = 0;
  for (auto y : train_labels) top = std::max(top, y);
  for (auto y : test_labels) top = std::max(top, y);
  std::vector<std::vector<double>> features;
  for (const auto& rec : train) features.push_back(rec.vector);
  const auto clf = LogisticRegression::fit(features, train_labels, static_cast<std::size_t>(top + 1), config);
  std::vector<std::vector<double>> probs;
  for (const auto& rec : test) probs.push_back(clf.probabilities(rec.vector));
  return score_probabilities(probs, test_labels, metric);
}

MetricsReport run_experiment(const ExperimentConfig& config, std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  const auto data = run_stage("data", [&] { return prepare_data(config); });
  if (data.tasks.empty()) throw ConfigError("experiment.tasks is required for file datasets");
  const auto& split = data.split;
  const auto has = [&](std::string_view m) {
    return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
  };
  const auto bs = config.train.batch_size, max_len = config.train.max_len;
  std::map<std::string, std::size_t> classes;
  for (const auto& task : data.tasks)
    classes[task] = task_classes({&split.train, &split.validation, &split.test}, task);

  MetricsReport report;
  report.fingerprint = config.fingerprint();
  const auto metric = metric_name(config.metric);
  auto record = [&](const std::string& method, const std::string& task, std::uint64_t seed, double value) {
    report.rows.push_back({method, task, seed, metric, value});
    if (log) *log << method << " " << task << " seed " << seed << " " << metric << " " << fixed(value) << '\n';
  };

  for (const auto seed : config.seeds) {
    TrainConfig tc = config.train;
    tc.seed = seed;
    const auto init_seed = Rng::derive(seed, "model");
    auto fresh = [&] { return HtTransformer(data.schema, config.model, data.time, init_seed); };
    auto tag = [&](const std::string& name) { return name + " (seed " + std::to_string(seed) + ")"; };

    auto probe = [&](const HtTransformer& model, EmbeddingStrategy strategy, const std::string& method) {
      run_stage(tag(method + " evaluation"), [&] {
        const auto train_emb = extract_embeddings(model, split.train, strategy, bs, max_len);
        const auto test_emb = extract_embeddings(model, split.test, strategy, bs, max_len);
        for (const auto& task : data.tasks)
          record(method, task, seed, evaluate_embeddings(train_emb, test_emb, task, config.metric, config.downstream));
        return 0;
      });
    };
    auto sft_score = [&](HtTransformer& model, const std::string& task, std::size_t epochs, const std::string& method) {
      run_stage(tag(method + " " + task), [&] {
        finetune(model, split.train, split.validation, task, classes.at(task), epochs, tc, log);
        record(method, task, seed,
               score_probabilities(predict_probabilities(model, split.test, tc), dataset_labels(split.test, task),
                                   config.metric));
        return 0;
      });
    };

    if (has("supervised"))
      for (const auto& task : data.tasks) {
        auto model = fresh();
        sft_score(model, task, tc.epochs, "supervised");
      }
    if (has("ntp_last") || has("ntp_avg") || has("ntp_cls")) {
      auto model = fresh();
      TrainConfig plain = tc;
      plain.objective = Objective::Ntp;
      plain.ht.enabled = false;
      run_stage(tag("ntp pretraining"), [&] { return pretrain(model, split.train, split.validation, plain, log); });
      if (has("ntp_last")) probe(model, EmbeddingStrategy::LastToken, "ntp_last");
      if (has("ntp_avg")) probe(model, EmbeddingStrategy::MeanTokens, "ntp_avg");
      if (has("ntp_cls")) probe(model, EmbeddingStrategy::Cls, "ntp_cls");
    }
    if (has("coles")) {
      auto model = fresh();
      TrainConfig coles = tc;
      coles.objective = Objective::Coles;
      run_stage(tag("coles pretraining"), [&] { return pretrain(model, split.train, split.validation, coles, log); });
      probe(model, EmbeddingStrategy::LastToken, "coles");
    }
    if (has("ntp_ht") || has("ht_sft")) {
      auto model = fresh();
      TrainConfig ht = tc;
      ht.objective = Objective::Ntp;
      ht.ht.enabled = true;
      run_stage(tag("ht pretraining"), [&] { return pretrain(model, split.train, split.validation, ht, log); });
      if (has("ntp_ht")) probe(model, EmbeddingStrategy::HistoryToken, "ntp_ht");
      if (has("ht_sft"))
        for (const auto& task : data.tasks) {
          auto tuned = model.clone();
          sft_score(tuned, task, tc.sft_epochs, "ht_sft");
        }
    }
  }

  auto rank = [](const std::vector<std::string>& order, const std::string& key) {
    return std::find(order.begin(), order.end(), key) - order.begin();
  };
  std::vector<std::string> seed_order;
  for (auto s : config.seeds) seed_order.push_back(std::to_string(s));
  std::stable_sort(report.rows.begin(), report.rows.end(), [&](const MetricRow& a, const MetricRow& b) {
    const auto ka = std::tuple(rank(config.methods, a.method), rank(data.tasks, a.task),
                               rank(seed_order, std::to_string(a.seed)));
    const auto kb = std::tuple(rank(config.methods, b.method), rank(data.tasks, b.task),
                               rank(seed_order, std::to_string(b.seed)));
    return ka < kb;
  });
  report.wall_seconds = seconds_since(start);
  return report;
}

std::string MetricsReport::csv() const {
  std::string out = "method,task,seed,metric,value\n";
  for (const auto& r : rows)
    out += r.method + "," + r.task + "," + std::to_string(r.seed) + "," + r.metric + "," + format_double(r.value) + "\n";
  return out;
}

double MetricsReport::median(const std::string& method, const std::string& task) const {
  std::vector<double> values;
  for (const auto& r : rows)
    if (r.method == method && r.task == task) values.push_back(r.value);
  return median_of(values);
}

std::string MetricsReport::summary() const {
  std::vector<std::string> methods, tasks, seeds;
  auto note = [](std::vector<std::string>& list, const std::string& v) {
    if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
  };
  for (const auto& r : rows) {
    note(methods, r.method);
    note(tasks, r.task);
    note(seeds, std::to_string(r.seed));
  }
  std::ostringstream out;
  out << "config " << fingerprint << ", wall-clock " << fixed(wall_seconds, 1) << " s\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-10s", "method", "task");
  out << line;
  for (const auto& s : seeds) {
    std::snprintf(line, sizeof line, " %9s", ("seed " + s).c_str());
    out << line;
  }
  out << "    median\n";
  for (const auto& m : methods)
    for (const auto& t : tasks) {
      std::vector<double> values;
      std::snprintf(line, sizeof line, "%-12s %-10s", m.c_str(), t.c_str());
      out << line;
      for (const auto& s : seeds) {
        auto it = std::find_if(rows.begin(), rows.end(), [&](const MetricRow& r) {
          return r.method == m && r.task == t && std::to_string(r.seed) == s;
        });
        if (it == rows.end()) {
          out << "          -";
          continue;
        }
        values.push_back(it->value);
        std::snprintf(line, sizeof line, " %9s", fixed(it->value).c_str());
        out << line;
      }
      if (!values.empty()) {
        std::snprintf(line, sizeof line, " %9s", fixed(median_of(values)).c_str());
        out << line;
      }
      out << '\n';
    }
  return out.str();
}

SweepReport run_sweep(const ExperimentConfig& config, std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  const auto data = run_stage("data", [&] { return prepare_data(config); });
  if (data.tasks.empty()) throw ConfigError("experiment.tasks is required for file datasets");
  const auto bs = config.train.batch_size, max_len = config.train.max_len;
  SweepReport report;
  report.tasks = data.tasks;
  report.metric = metric_name(config.metric);
  report.fingerprint = config.fingerprint();

  std::vector<std::tuple<std::string, double, double>> cells;
  if (config.sweep_mode == "grid") {
    for (double f : config.sweep_f)
      for (double p : config.sweep_p) cells.emplace_back("grid", f, p);
  } else {
    for (double f : config.sweep_f) cells.emplace_back("f", f, config.train.ht.probability);
    for (double p : config.sweep_p) cells.emplace_back("p", config.train.ht.frequency, p);
  }
  std::map<std::tuple<double, double, std::uint64_t>, std::vector<double>> done;
  for (const auto seed : config.seeds) {
    for (const auto& [axis, f, p] : cells) {
      auto key = std::tuple(f, p, seed);
      if (!done.count(key)) {
        done[key] = run_stage("sweep f=" + format_double(f) + " p=" + format_double(p) + " seed " + std::to_string(seed), [&] {
          TrainConfig tc = config.train;
          tc.seed = seed;
          tc.objective = Objective::Ntp;
          tc.ht.enabled = true;
          tc.ht.frequency = f;
          tc.ht.probability = p;
          tc.validate();
          HtTransformer model(data.schema, config.model, data.time, Rng::derive(seed, "model"));
          pretrain(model, data.split.train, data.split.validation, tc, log);
          const auto train_emb = extract_embeddings(model, data.split.train, EmbeddingStrategy::HistoryToken, bs, max_len);
          const auto test_emb = extract_embeddings(model, data.split.test, EmbeddingStrategy::HistoryToken, bs, max_len);
          std::vector<double> values;
          for (const auto& task : data.tasks)
            values.push_back(evaluate_embeddings(train_emb, test_emb, task, config.metric, config.downstream));
          return values;
        });
      }
      report.rows.push_back({axis, f, p, seed, done[key]});
      if (log) {
        *log << "sweep " << axis << " f " << format_double(f) << " p " << format_double(p) << " seed " << seed;
        for (std::size_t t = 0; t < data.tasks.size(); ++t) *log << " " << data.tasks[t] << " " << fixed(done[key][t]);
        *log << '\n';
      }
    }
  }
  report.wall_seconds = seconds_since(start);
  return report;
}

std::string SweepReport::csv() const {
  std::string out = "sweep_axis,f,p,seed";
  for (const auto& t : tasks) out += "," + t + "_" + metric;
  out += '\n';
  for (const auto& r : rows) {
    out += r.axis + "," + format_double(r.f) + "," + format_double(r.p) + "," + std::to_string(r.seed);
    for (double v : r.values) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

std::string SweepReport::summary() const {
  std::ostringstream out;
  out << "config " << fingerprint << ", wall-clock " << fixed(wall_seconds, 1) << " s\n";
  std::map<std::tuple<std::string, double, double>, std::vector<std::vector<double>>> cells;
  std::vector<std::tuple<std::string, double, double>> order;
  for (const auto& r : rows) {
    auto key = std::tuple(r.axis, r.f, r.p);
    if (!cells.count(key)) order.push_back(key);
    cells[key].push_back(r.values);
  }
  char line[256];
  std::snprintf(line, sizeof line, "%-5s %6s %6s", "axis", "f", "p");
  out << line;
  for (const auto& t : tasks) {
    std::snprintf(line, sizeof line, " %12s", (t + " med").c_str());
    out << line;
  }
  out << '\n';
  for (const auto& key : order) {
    const auto& [axis, f, p] = key;
    std::snprintf(line, sizeof line, "%-5s %6s %6s", axis.c_str(), format_double(f).c_str(), format_double(p).c_str());
    out << line;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      std::vector<double> values;
      for (const auto& v : cells[key]) values.push_back(v[t]);
      std::snprintf(line, sizeof line, " %12s", fixed(median_of(values)).c_str());
      out << line;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace htseq
