// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "htseq/downstream.hpp"
#include "htseq/error.hpp"
#include "htseq/experiment.hpp"
#include "htseq/training.hpp"

using namespace htseq;

namespace {

double auc_oracle(const std::vector<double>& s, const std::vector<std::int64_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

DatasetSplit tiny_toy(std::int64_t count = 40) {
  toy::ToyConfig cfg;
  cfg.num_sequences = count;
  cfg.segment_min = 4;
  cfg.segment_max = 8;
  return split_dataset(toy::generate_dataset(cfg).dataset, {0.6, 0.2, 0.2}, 0);
}

TrainConfig quick_train() {
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.lr = 3e-3;
  return tc;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("logistic regression separates clusters") {
    Rng rng(1);
    std::vector<std::vector<double>> x;
    std::vector<std::int64_t> y;
    for (int i = 0; i < 150; ++i) {
      const auto c = i % 3;
      x.push_back({4.0 * c + rng.normal(0.0, 0.3), -3.0 * c + rng.normal(0.0, 0.3)});
      y.push_back(c);
    }
    const auto clf = LogisticRegression::fit(x, y, 3);
    std::vector<std::int64_t> pred;
    for (const auto& row : x) pred.push_back(clf.predict(row));
    CHECK(accuracy(pred, y) == 1.0);
    const auto p = clf.probabilities(x[0]);
    CHECK(p.size() == 3);
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("logistic regression scores chance on unrelated labels") {
    Rng rng(2);
    auto sample = [&](std::size_t n, std::vector<std::vector<double>>& x, std::vector<std::int64_t>& y) {
      for (std::size_t i = 0; i < n; ++i) {
        x.push_back({rng.normal(), rng.normal(), rng.normal()});
        y.push_back(static_cast<std::int64_t>(i % 2));
      }
    };
    std::vector<std::vector<double>> xtr, xte;
    std::vector<std::int64_t> ytr, yte;
    sample(2000, xtr, ytr);
    sample(2000, xte, yte);
    const auto clf = LogisticRegression::fit(xtr, ytr, 2);
    std::vector<double> scores;
    for (const auto& row : xte) scores.push_back(clf.probabilities(row)[1]);
    CHECK(std::fabs(roc_auc(scores, yte) - 0.5) < 0.05);
  }

  TEST_CASE("logistic regression converges to the same optimum from different starts") {
    Rng rng(3);
    std::vector<std::vector<double>> x;
    std::vector<std::int64_t> y;
    for (int i = 0; i < 200; ++i) {
      x.push_back({rng.normal(), rng.normal()});
      y.push_back(x.back()[0] + 0.5 * rng.normal() > 0 ? 1 : 0);
    }
    LogisticConfig cfg;
    cfg.l2 = 0.1;
    const auto a = LogisticRegression::fit(x, y, 2, cfg);
    std::vector<double> start(a.coefficients().size(), 3.0);
    const auto b = LogisticRegression::fit(x, y, 2, cfg, &start);
    CHECK(a.final_objective() == doctest::Approx(b.final_objective()).epsilon(1e-10));
    for (std::size_t i = 0; i < start.size(); ++i)
      CHECK(std::fabs(a.coefficients()[i] - b.coefficients()[i]) < 1e-5);
    const std::vector<std::int64_t> bad{0, 5};
    CHECK_THROWS(LogisticRegression::fit({{1.0}, {2.0}}, bad, 2));
  }

  TEST_CASE("roc_auc edge cases and the pairwise oracle") {
    const std::vector<std::int64_t> y{0, 0, 1, 1};
    CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 1.0);
    CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y) == 0.0);
    CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
    CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<std::int64_t>{1, 1}), ValidationError);
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      const auto n = static_cast<std::size_t>(rng.uniform_int(2, 60));
      std::vector<double> s(n);
      std::vector<std::int64_t> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng.uniform_int(0, 5));  // coarse scores force ties
        labels[i] = i < 1 ? 0 : (i < 2 ? 1 : rng.uniform_int(0, 1));
      }
      const double auc = roc_auc(s, labels);
      CHECK(auc == doctest::Approx(auc_oracle(s, labels)).epsilon(1e-12));
      std::vector<std::int64_t> flipped(n);
      for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - labels[i];
      CHECK(roc_auc(s, flipped) == doctest::Approx(1.0 - auc).epsilon(1e-12));
    }
  }

  TEST_CASE("pretraining lowers validation loss") {
    const auto split = tiny_toy();
    const auto time = compute_time_stats(split.train);
    HtTransformer model(split.train.schema, testutil::tiny_model(1), time, 1);
    const auto result = pretrain(model, split.train, split.validation, quick_train());
    REQUIRE(result.history.size() == 4);
    CHECK(result.history[0].epoch == 0);
    CHECK(result.best_val < result.history[0].val_metric);
    CHECK(validation_loss(model, split.validation, quick_train()) == doctest::Approx(result.best_val).epsilon(1e-12));
  }

  TEST_CASE("p = 0 pretraining matches plain next-token training bit for bit") {
    const auto split = tiny_toy();
    const auto time = compute_time_stats(split.train);
    auto plain_cfg = quick_train();
    plain_cfg.ht.enabled = false;
    auto zero_cfg = quick_train();
    zero_cfg.ht.probability = 0.0;
    HtTransformer plain(split.train.schema, testutil::tiny_model(1), time, 2);
    HtTransformer zero(split.train.schema, testutil::tiny_model(1), time, 2);
    pretrain(plain, split.train, split.validation, plain_cfg);
    pretrain(zero, split.train, split.validation, zero_cfg);
    CHECK(checkpoint_bytes(plain.parameters()) == checkpoint_bytes(zero.parameters()));
  }

  TEST_CASE("same seed gives the same checkpoint") {
    const auto split = tiny_toy();
    const auto time = compute_time_stats(split.train);
    HtTransformer a(split.train.schema, testutil::tiny_model(1), time, 3);
    HtTransformer b(split.train.schema, testutil::tiny_model(1), time, 3);
    auto cfg = quick_train();
    cfg.epochs = 2;
    pretrain(a, split.train, split.validation, cfg);
    pretrain(b, split.train, split.validation, cfg);
    CHECK(checkpoint_bytes(a.parameters()) == checkpoint_bytes(b.parameters()));
    cfg.objective = Objective::Coles;
    cfg.coles_k = 3;
    pretrain(a, split.train, split.validation, cfg);
    pretrain(b, split.train, split.validation, cfg);
    CHECK(checkpoint_bytes(a.parameters()) == checkpoint_bytes(b.parameters()));
  }

  TEST_CASE("frozen backbone fits a small training set") {
    const auto split = tiny_toy(30);
    const auto time = compute_time_stats(split.train);
    HtTransformer model(split.train.schema, testutil::tiny_model(1, 16), time, 4);
    const auto backbone = checkpoint_bytes(model.parameters());
    auto cfg = quick_train();
    cfg.freeze_backbone = true;
    cfg.lr = 0.05;
    cfg.patience = 1000;
    const auto classes = task_classes({&split.train}, "local");
    finetune(model, split.train, split.train, "local", classes, 300, cfg);
    const auto pred = predict_classes(model, split.train, cfg);
    std::vector<std::int64_t> labels;
    for (const auto& s : split.train.sequences) labels.push_back(s.labels.at("local"));
    CHECK(accuracy(pred, labels) == 1.0);
    for (const auto& [name, t] : model.parameters().items()) {
      if (!model.is_backbone_parameter(name)) continue;
      HtTransformer fresh(split.train.schema, testutil::tiny_model(1, 16), time, 4);
      const auto& orig = fresh.parameters().get(name);
      CHECK(std::equal(t.data().begin(), t.data().end(), orig.data().begin()));
    }
    (void)backbone;
  }

  TEST_CASE("embedding extraction and NDJSON round trip") {
    const auto split = tiny_toy();
    const auto time = compute_time_stats(split.train);
    HtTransformer model(split.train.schema, testutil::tiny_model(1), time, 5);
    for (auto strategy : {EmbeddingStrategy::HistoryToken, EmbeddingStrategy::LastToken, EmbeddingStrategy::MeanTokens,
                          EmbeddingStrategy::Cls}) {
      const auto a = extract_embeddings(model, split.train, strategy, 5, 512);
      const auto b = extract_embeddings(model, split.train, strategy, 7, 512);
      REQUIRE(a.size() == split.train.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == split.train.sequences[i].id);
        CHECK(a[i].vector.size() == 8);
        CHECK(a[i].labels == split.train.sequences[i].labels);
        for (std::size_t c = 0; c < 8; ++c) CHECK(a[i].vector[c] == doctest::Approx(b[i].vector[c]).epsilon(1e-12));
      }
      const auto back = parse_embeddings(embeddings_to_ndjson(a));
      REQUIRE(back.size() == a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(back[i].id == a[i].id);
        CHECK(back[i].vector == a[i].vector);
        CHECK(back[i].labels == a[i].labels);
      }
    }
  }

  TEST_CASE("experiment reports are deterministic and complete") {
    const auto cfg = ExperimentConfig::from_config(testutil::tiny_experiment());
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    CHECK(a.csv() == b.csv());
    CHECK(a.rows.size() == 7 * 2 * 2);
    CHECK(a.rows.front().method == "supervised");
    CHECK(a.rows.back().method == "ht_sft");
    for (const auto& r : a.rows) {
      CHECK(r.value >= 0.0);
      CHECK(r.value <= 1.0);
    }
    CHECK(a.summary().find(a.fingerprint) != std::string::npos);
    CHECK(a.median("coles", "local") >= 0.0);
  }

  TEST_CASE("sweep emits one row per cell and seed") {
    auto kv = testutil::tiny_experiment();
    kv.set("sweep.f", "0.05, 0.5");
    kv.set("sweep.p", "0, 1");
    kv.set("experiment.seeds", "7");
    kv.set("train.epochs", "1");
    const auto report = run_sweep(ExperimentConfig::from_config(kv));
    CHECK(report.rows.size() == 4);
    const auto csv = report.csv();
    CHECK(csv.rfind("sweep_axis,f,p,seed,local_accuracy,global_accuracy\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    kv.set("sweep.mode", "grid");
    CHECK(run_sweep(ExperimentConfig::from_config(kv)).rows.size() == 4);
  }

  TEST_CASE("config errors name the offending key") {
    auto kv = testutil::tiny_experiment();
    kv.set("experiment.methods", "supervised, bogus");
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_config(kv), doctest::Contains("bogus"), ConfigError);
    kv = testutil::tiny_experiment();
    kv.set("ht.frequency", "-0.5");
    CHECK_THROWS_AS(ExperimentConfig::from_config(kv), ConfigError);
    kv.set("ht.frequency", "1.5");
    kv.set("ht.probability", "1.5");
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_config(kv), doctest::Contains("ht.probability"), ConfigError);
  }
}
