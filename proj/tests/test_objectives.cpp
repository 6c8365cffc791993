// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "htseq/error.hpp"
#include "htseq/gradcheck.hpp"
#include "htseq/objectives.hpp"

using namespace htseq;

namespace {

const TimeStats kTime{0.5, 30.0};

// Brute force over unordered pairs, written independently of the fused op.
double coles_oracle(const std::vector<std::vector<double>>& e, const std::vector<std::string>& ids, double margin) {
  double total = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < e[i].size(); ++c) sq += std::pow(e[i][c] - e[j][c], 2);
      total += ids[i] == ids[j] ? sq : std::pow(std::max(0.0, margin - std::sqrt(sq)), 2);
      pairs += 1.0;
    }
  return total / pairs;
}

}  // namespace

TEST_SUITE("objectives") {
  TEST_CASE("target table skips history tokens") {
    const auto schema = testutil::mixed_schema();
    Dataset data;
    data.schema = schema;
    Rng rng(1);
    data.sequences.push_back(testutil::random_sequence(schema, 2, rng, "a"));
    data.sequences.push_back(testutil::random_sequence(schema, 3, rng, "b"));
    const auto batch = make_ordered_batches(data, 2, 100)[0];
    HTPlan plan;
    plan.positions = {1};
    plan.timestamps = {batch.timestamp(0, 0)};
    const auto aug = apply_plans(batch, {plan, HTPlan{}});
    CHECK(aug.layouts[0].to_string() == "EHE");
    HtTransformer model(schema, testutil::tiny_model(), kTime, 0);
    Rng mrng(0);
    const auto packed = model.pack(batch, aug, build_masks(aug, HtSelection::Last, mrng));
    const auto t = ntp_targets(batch, packed);
    // Row 0: E@0 -> event 1. Row 1 (offset 3): E@0 -> 1, E@1 -> 2.
    CHECK(t.sources == std::vector<std::size_t>{0, 3, 4});
    CHECK(t.target_cells == std::vector<std::size_t>{batch.index(0, 1), batch.index(1, 1), batch.index(1, 2)});
    CHECK(t.dt[0] == doctest::Approx(batch.timestamp(0, 1) - batch.timestamp(0, 0)));
  }

  TEST_CASE("exact numerical predictions give zero loss and weights scale linearly") {
    const auto schema = testutil::mixed_schema();
    const auto data = testutil::random_dataset(schema, 3, 2, 6, 2);
    const auto batch = make_ordered_batches(data, 3, 100)[0];
    HtTransformer model(schema, testutil::tiny_model(), kTime, 1);
    Rng mrng(0);
    const auto aug = causal_layouts(batch);
    const auto packed = model.pack(batch, aug, build_masks(aug, HtSelection::Last, mrng));
    const auto targets = ntp_targets(batch, packed);
    const auto n = targets.size();
    NtpOutputs exact;
    Rng rng(3);
    exact.categorical = {testutil::random_tensor({n, 5}, rng), testutil::random_tensor({n, 3}, rng)};
    std::vector<double> amounts(n);
    for (std::size_t r = 0; r < n; ++r) amounts[r] = batch.numerical[0][targets.target_cells[r]];
    exact.numerical = {ad::Tensor::from({n, 1}, amounts)};
    exact.dt = ad::Tensor::from({n, 1}, targets.dt);
    LossWeights numeric_only = LossWeights::uniform(schema);
    numeric_only.categorical = {0.0, 0.0};
    CHECK(ntp_loss(exact, batch, targets, numeric_only).item() == 0.0);

    auto w = LossWeights::uniform(schema);
    const double base = ntp_loss(exact, batch, targets, w).item();
    w.categorical = {2.0, 2.0};
    w.numerical = {2.0};
    w.dt = 2.0;
    CHECK(ntp_loss(exact, batch, targets, w).item() == doctest::Approx(2.0 * base).epsilon(1e-14));

    const auto loss = ntp_loss(model, model.forward(packed), batch, packed, LossWeights::uniform(schema));
    CHECK(std::isfinite(loss.item()));
    CHECK(loss.item() > 0.0);
  }

  TEST_CASE("loss weight config") {
    const auto schema = testutil::mixed_schema();
    const auto w = LossWeights::from_config(KvConfig::parse("loss.weight.place = 0.25\nloss.weight.dt = 0\n"), schema);
    CHECK(w.categorical == std::vector<double>{1.0, 0.25});
    CHECK(w.dt == 0.0);
    CHECK_THROWS_AS(LossWeights::from_config(KvConfig::parse("loss.weight.kind = -1\n"), schema), ConfigError);
  }

  TEST_CASE("next-event loss ignores pad content") {
    const auto schema = testutil::mixed_schema();
    const auto data = testutil::random_dataset(schema, 4, 2, 9, 4);
    auto batch = make_ordered_batches(data, 4, 100)[0];
    HtTransformer model(schema, testutil::tiny_model(), kTime, 2);
    auto loss_of = [&](const PaddedBatch& b) {
      Rng mrng(0);
      const auto aug = causal_layouts(b);
      const auto packed = model.pack(b, aug, build_masks(aug, HtSelection::Last, mrng));
      return ntp_loss(model, model.forward(packed), b, packed, LossWeights::uniform(schema)).item();
    };
    const double before = loss_of(batch);
    for (std::size_t r = 0; r < batch.batch_size; ++r)
      for (std::size_t i = batch.lengths[r]; i < batch.max_length; ++i) {
        batch.categorical[1][batch.index(r, i)] = 2;
        batch.numerical[0][batch.index(r, i)] = 1e6;
        batch.timestamps[batch.index(r, i)] = -50.0;
      }
    CHECK(loss_of(batch) == before);
  }

  TEST_CASE("subsequence lengths and starts stay in range") {
    const auto schema = testutil::mixed_schema();
    Rng rng(5);
    for (std::size_t n : {1u, 2u, 7u, 10u, 40u}) {
      const auto seq = testutil::random_sequence(schema, n, rng, "x");
      const auto subs = sample_subsequences(seq, 50, rng);
      if (n < 2) {
        CHECK(subs.empty());
        continue;
      }
      CHECK(subs.size() == 50);
      for (const auto& s : subs) {
        CHECK(s.id == "x");
        CHECK(s.size() >= std::min<std::size_t>(10, n));
        CHECK(s.size() <= n);
        const auto it = std::find(seq.timestamps.begin(), seq.timestamps.end(), s.timestamps.front());
        REQUIRE(it != seq.timestamps.end());
        const auto start = static_cast<std::size_t>(it - seq.timestamps.begin());
        CHECK(start + s.size() <= n);
        CHECK(s.categorical[0][0] == seq.categorical[0][start]);
      }
    }
  }

  TEST_CASE("contrastive pair loss") {
    const std::vector<double> a{0.0, 0.0}, b{0.3, 0.0}, far{2.0, 0.0};
    CHECK(contrastive_loss(a, b, false, 0.5) == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(contrastive_loss(a, b, true, 0.5) == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(contrastive_loss(a, far, false, 0.5) == 0.0);

    // A negative pair beyond the margin contributes no gradient.
    auto e = ad::Tensor::from({2, 2}, {0.0, 0.0, 2.0, 0.0}, true);
    coles_batch_loss(e, {"p", "q"}, 0.5).backward();
    for (double g : e.grad()) CHECK(g == 0.0);
  }

  TEST_CASE("batch loss matches the pairwise oracle and finite differences") {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
      auto e = testutil::random_tensor({12, 4}, rng, true, 0.3);
      std::vector<std::string> ids;
      for (int i = 0; i < 12; ++i) ids.push_back("id" + std::to_string(i / 3));
      std::vector<std::vector<double>> rows(12);
      for (std::size_t i = 0; i < 12; ++i) rows[i] = {e.data().begin() + i * 4, e.data().begin() + i * 4 + 4};
      CHECK(coles_batch_loss(e, ids, 1.0).item() == doctest::Approx(coles_oracle(rows, ids, 1.0)).epsilon(1e-12));
      const auto report =
          ad::grad_check([&](const std::vector<ad::Tensor>& in) { return coles_batch_loss(in[0], ids, 1.0); }, {e});
      CHECK(report.passed);
    }
    CHECK_THROWS_AS(coles_batch_loss(ad::Tensor::zeros({3, 2}), {"a", "a", "a"}, 0.5), ValidationError);
  }

  TEST_CASE("supervised loss") {
    const auto logits = ad::Tensor::zeros({2, 4});
    const std::vector<std::int64_t> labels{0, 3};
    CHECK(supervised_loss(logits, labels).item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    const std::vector<std::int64_t> bad{0, 4};
    CHECK_THROWS_AS(supervised_loss(logits, bad), ValidationError);
  }

  TEST_CASE("classification gradient reaches the backbone") {
    const auto schema = testutil::mixed_schema();
    const auto data = testutil::random_dataset(schema, 3, 2, 6, 7);
    const auto batch = make_ordered_batches(data, 3, 100)[0];
    HtTransformer model(schema, testutil::tiny_model(), kTime, 3);
    model.reset_classifier(3, 0);
    Rng mrng(0);
    const auto aug = inference_layouts(batch);
    const auto packed = model.pack(batch, aug, build_masks(aug, HtSelection::Last, mrng));
    std::vector<std::int64_t> labels;
    for (const auto& l : batch.labels) labels.push_back(l.at("task"));
    supervised_loss(model.classify(model.forward(packed), packed), labels).backward();
    const auto& g = model.parameters().get("block0.attn.qkv.w");
    REQUIRE(g.has_grad());
    double norm = 0.0;
    for (double v : g.grad()) norm += v * v;
    CHECK(norm > 0.0);
  }
}
