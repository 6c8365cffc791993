// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: data generation, training, embedding, evaluation.

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "htseq/error.hpp"
#include "htseq/experiment.hpp"
#include "htseq/masks.hpp"
#include "htseq/memory.hpp"
#include "htseq/toygen.hpp"

namespace {

using namespace htseq;

// Short flags that stand for config keys.
const std::map<std::string, std::string> kAliases = {
    {"ht-frequency", "ht.frequency"},
    {"ht-probability", "ht.probability"},
    {"ht-placement", "ht.placement"},
    {"ht-selection", "ht.selection"},
};

// Turns leftover "--key value" / "--key=value" arguments into config entries.
KvConfig overrides_from(std::vector<std::string> extra) {
  KvConfig out;
  for (std::size_t i = 0; i < extra.size(); ++i) {
    const auto& arg = extra[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) throw ConfigError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2), value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extra.size()) throw ConfigError("option --" + key + " needs a value");
      value = extra[++i];
    }
    if (auto it = kAliases.find(key); it != kAliases.end()) key = it->second;
    out.set(key, value);
  }
  return out;
}

struct ConfigArgs {
  std::string config_path;
  std::string data_path;
  std::string schema_path;
};

void add_config_options(CLI::App* app, ConfigArgs& args) {
  app->add_option("--config", args.config_path, "Experiment config file (key = value lines)");
  app->add_option("--data", args.data_path, "NDJSON dataset (sets data.source = file)");
  app->add_option("--schema", args.schema_path, "Schema file for --data");
  app->allow_extras();
}

KvConfig build_config(const ConfigArgs& args, CLI::App* app) {
  KvConfig cfg;
  if (!args.config_path.empty()) cfg = KvConfig::load(args.config_path);
  if (!args.data_path.empty()) {
    cfg.set("data.source", "file");
    cfg.set("data.path", args.data_path);
  }
  if (!args.schema_path.empty()) cfg.set("data.schema", args.schema_path);
  cfg.merge(overrides_from(app->remaining()));
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

const Dataset& pick_split(const DatasetSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "validation") return split.validation;
  if (name == "test") return split.test;
  throw ConfigError("split must be train, validation, test or all, got '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  htseq::keep_freed_memory();
  CLI::App app{"History-token transformers for event sequences"};
  app.require_subcommand(1);

  ConfigArgs gen_args;
  std::string gen_out, gen_schema_out;
  auto* gen = app.add_subcommand("gen-toy", "Generate the synthetic Markov-switching dataset");
  add_config_options(gen, gen_args);
  gen->add_option("--out", gen_out, "Output NDJSON dataset")->required();
  gen->add_option("--schema-out", gen_schema_out, "Output schema file (default: <out>.schema)");

  ConfigArgs pre_args;
  std::string pre_out;
  auto* pre = app.add_subcommand("pretrain", "Pretrain a model with next-event or contrastive loss");
  add_config_options(pre, pre_args);
  pre->add_option("--out", pre_out, "Output checkpoint")->required();

  ConfigArgs ft_args;
  std::string ft_model, ft_task, ft_out;
  auto* ft = app.add_subcommand("finetune", "Fine-tune a checkpoint with a classification head");
  add_config_options(ft, ft_args);
  ft->add_option("--model", ft_model, "Pretrained checkpoint")->required();
  ft->add_option("--task", ft_task, "Label to predict")->required();
  ft->add_option("--out", ft_out, "Output checkpoint")->required();

  ConfigArgs emb_args;
  std::string emb_model, emb_strategy = "ht", emb_split = "all", emb_out;
  auto* emb = app.add_subcommand("embed", "Write sequence embeddings as NDJSON");
  add_config_options(emb, emb_args);
  emb->add_option("--model", emb_model, "Checkpoint")->required();
  emb->add_option("--strategy", emb_strategy, "ht, last, mean or cls");
  emb->add_option("--split", emb_split, "train, validation, test or all");
  emb->add_option("--out", emb_out, "Output NDJSON")->required();

  std::string cls_train, cls_test, cls_task, cls_metric = "accuracy";
  double cls_l2 = 1e-3;
  auto* cls = app.add_subcommand("classify", "Fit logistic regression on embeddings and score a test set");
  cls->add_option("--train", cls_train, "Training embeddings")->required();
  cls->add_option("--test", cls_test, "Test embeddings")->required();
  cls->add_option("--task", cls_task, "Label to predict")->required();
  cls->add_option("--metric", cls_metric, "accuracy or roc_auc");
  cls->add_option("--l2", cls_l2, "L2 penalty");

  ConfigArgs eval_args;
  std::string eval_out, eval_summary;
  auto* eval = app.add_subcommand("evaluate", "Run every configured method and seed and write a CSV report");
  add_config_options(eval, eval_args);
  eval->add_option("--out", eval_out, "CSV report")->required();
  eval->add_option("--summary", eval_summary, "Also write the summary table here");

  ConfigArgs sweep_args;
  std::string sweep_out, sweep_summary;
  auto* sweep = app.add_subcommand("sweep", "Sweep history-token frequency and probability");
  add_config_options(sweep, sweep_args);
  sweep->add_option("--out", sweep_out, "CSV report")->required();
  sweep->add_option("--summary", sweep_summary, "Also write the summary table here");

  std::string mask_layout, mask_strategy = "last";
  std::uint64_t mask_seed = 0;
  auto* masks = app.add_subcommand("masks", "Attention mask utilities");
  masks->require_subcommand(1);
  auto* dump = masks->add_subcommand("dump", "Print the 0/1 attention grid of a token layout");
  dump->add_option("--layout", mask_layout, "Tags such as EEHEEHEPP")->required();
  dump->add_option("--strategy,--selection", mask_strategy, "last or random");
  dump->add_option("--seed", mask_seed, "Seed for random selection");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = build_config(gen_args, gen);
      const auto toy_cfg = toy::ToyConfig::from_config(cfg);
      const auto data = toy::generate_dataset(toy_cfg);
      save_dataset(data.dataset, gen_out);
      const auto schema_path = gen_schema_out.empty() ? gen_out + ".schema" : gen_schema_out;
      toy::toy_schema(toy_cfg).to_config().save(schema_path);
      std::cout << "wrote " << data.dataset.size() << " sequences to " << gen_out << " (schema " << schema_path << ")\n";
    } else if (pre->parsed()) {
      const auto config = ExperimentConfig::from_config(build_config(pre_args, pre));
      const auto data = prepare_data(config);
      HtTransformer model(data.schema, config.model, data.time, Rng::derive(config.train.seed, "model"));
      const auto result = pretrain(model, data.split.train, data.split.validation, config.train, &std::cout);
      model.save(pre_out);
      std::cout << "best epoch " << result.best_epoch << " val_loss " << format_double(result.best_val) << "; wrote "
                << pre_out << '\n';
    } else if (ft->parsed()) {
      const auto config = ExperimentConfig::from_config(build_config(ft_args, ft));
      const auto data = prepare_data(config);
      auto model = HtTransformer::load(ft_model);
      if (!(model.schema() == data.schema)) throw ValidationError("checkpoint schema differs from the dataset schema");
      const auto classes = task_classes({&data.split.train, &data.split.validation, &data.split.test}, ft_task);
      finetune(model, data.split.train, data.split.validation, ft_task, classes, config.train.sft_epochs, config.train,
               &std::cout);
      const auto predicted = predict_classes(model, data.split.test, config.train);
      std::vector<std::int64_t> labels;
      for (const auto& seq : data.split.test.sequences) labels.push_back(seq.labels.at(ft_task));
      model.save(ft_out);
      std::cout << "test accuracy " << format_double(accuracy(predicted, labels)) << "; wrote " << ft_out << '\n';
    } else if (emb->parsed()) {
      const auto config = ExperimentConfig::from_config(build_config(emb_args, emb));
      const auto data = prepare_data(config);
      const auto model = HtTransformer::load(emb_model);
      const auto strategy = parse_strategy(emb_strategy);
      Dataset chosen;
      if (emb_split == "all") {
        for (const auto* part : {&data.split.train, &data.split.validation, &data.split.test})
          chosen.sequences.insert(chosen.sequences.end(), part->sequences.begin(), part->sequences.end());
      } else {
        chosen = pick_split(data.split, emb_split);
      }
      const auto records =
          extract_embeddings(model, chosen, strategy, config.train.batch_size, config.train.max_len);
      save_embeddings(records, emb_out);
      std::cout << "wrote " << records.size() << " embeddings to " << emb_out << '\n';
    } else if (cls->parsed()) {
      const auto train = load_embeddings(cls_train);
      const auto test = load_embeddings(cls_test);
      if (cls_metric != "accuracy" && cls_metric != "roc_auc")
        throw ConfigError("metric must be accuracy or roc_auc");
      LogisticConfig lc;
      lc.l2 = cls_l2;
      const double value = evaluate_embeddings(train, test, cls_task,
                                               cls_metric == "accuracy" ? Metric::Accuracy : Metric::RocAuc, lc);
      std::cout << cls_task << " " << cls_metric << " " << format_double(value) << '\n';
    } else if (eval->parsed()) {
      const auto config = ExperimentConfig::from_config(build_config(eval_args, eval));
      const auto report = run_experiment(config, &std::cerr);
      write_text(eval_out, report.csv());
      if (!eval_summary.empty()) write_text(eval_summary, report.summary());
      std::cout << report.summary();
    } else if (sweep->parsed()) {
      const auto config = ExperimentConfig::from_config(build_config(sweep_args, sweep));
      const auto report = run_sweep(config, &std::cerr);
      write_text(sweep_out, report.csv());
      if (!sweep_summary.empty()) write_text(sweep_summary, report.summary());
      std::cout << report.summary();
    } else if (dump->parsed()) {
      const auto layout = TokenLayout::from_string(mask_layout);
      layout.validate();
      Rng rng(mask_seed);
      const auto mask = layout.history_count() == 0 ? causal_mask(layout)
                                                    : ht_mask(layout, parse_selection(mask_strategy), rng);
      std::cout << layout.to_string() << '\n' << mask.to_string();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
