// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "htseq/error.hpp"
#include "htseq/httokens.hpp"

using namespace htseq;

namespace {

std::vector<double> unit_times(std::size_t n) {
  std::vector<double> t(n);
  std::iota(t.begin(), t.end(), 0.0);
  return t;
}

// Pearson statistic of counts against a uniform expectation.
double chi_square(const std::vector<int>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (int c : counts) stat += (c - expected) * (c - expected) / expected;
  return stat;
}

}  // namespace

TEST_SUITE("httokens") {
  TEST_CASE("history token counts") {
    CHECK(ht_count(37, 0.0) == 1);
    CHECK(ht_count(30, 0.1) == 3);
    CHECK(ht_count(5, 0.1) == 1);
    for (std::size_t len = 1; len < 80; ++len)
      for (double f : {0.0, 0.05, 0.1, 0.2, 0.5}) {
        CHECK(ht_count(len + 1, f) >= ht_count(len, f));
        CHECK(ht_count(len, f + 0.05) >= ht_count(len, f));
      }
  }

  TEST_CASE("uniform placement") {
    const auto t = unit_times(10);
    Rng rng(1);
    const auto full = plan_uniform(t, 10, rng);
    CHECK(full.positions == std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    CHECK_THROWS(plan_uniform(t, 11, rng));
    Rng a(5), b(5);
    CHECK(plan_uniform(t, 3, a).positions == plan_uniform(t, 3, b).positions);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 10000; ++i) ++counts[plan_uniform(t, 1, rng).positions[0] - 1];
    CHECK(chi_square(counts) < 21.67);  // df 9, p = 0.01
  }

  TEST_CASE("bias-end placement") {
    const auto t = unit_times(20);
    Rng rng(2);
    for (int i = 0; i < 200; ++i)
      for (auto p : plan_bias_end(t, 20.0, 3, rng).positions) CHECK((p >= 10 && p <= 20));
    // A short row in a long batch falls back to the whole row.
    const auto short_row = unit_times(4);
    std::vector<int> seen(4, 0);
    for (int i = 0; i < 400; ++i) ++seen[plan_bias_end(short_row, 30.0, 2, rng).positions[0] - 1];
    CHECK(seen[0] > 0);
    std::vector<int> counts(11, 0);  // positions 10..20 for mu = 19
    for (int i = 0; i < 10000; ++i) {
      const auto p = plan_bias_end(t, 19.0, 1, rng).positions[0];
      REQUIRE((p >= 10 && p <= 20));
      ++counts[p - 10];
    }
    CHECK(chi_square(counts) < 23.21);  // df 10, p = 0.01
  }

  TEST_CASE("plans are strictly increasing and timestamped by the preceding event") {
    Rng rng(3);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> t;
      double now = 0.0;
      const auto n = static_cast<std::size_t>(rng.uniform_int(1, 40));
      for (std::size_t i = 0; i < n; ++i) t.push_back(now += rng.uniform(0.0, 2.0));
      const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n)));
      const auto plan = trial % 2 ? plan_uniform(t, k, rng) : plan_bias_end(t, rng.uniform(1.0, 60.0), k, rng);
      REQUIRE(plan.positions.size() == k);
      for (std::size_t i = 0; i < k; ++i) {
        if (i > 0) CHECK(plan.positions[i] > plan.positions[i - 1]);
        CHECK(plan.timestamps[i] == t[plan.positions[i] - 1]);
      }
    }
  }

  TEST_CASE("application probability") {
    Rng rng(4);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
      CHECK_FALSE(should_apply(0.0, rng));
      CHECK(should_apply(1.0, rng));
      hits += should_apply(0.5, rng);
    }
    CHECK(std::abs(hits / 10000.0 - 0.5) < 0.02);
  }

  TEST_CASE("inference plans and layouts") {
    const std::vector<double> one{4.0};
    CHECK(inference_plan(one).positions == std::vector<std::size_t>{1});
    const std::vector<double> two{2.0, 9.0};
    const auto plan = inference_plan(two);
    CHECK(plan.timestamps == std::vector<double>{9.0});
    const auto layout = apply_plan(two, plan);
    CHECK(layout.to_string() == "EEH");
    layout.validate_inference();
    CHECK(layout.timestamps[2] == 9.0);
  }

  TEST_CASE("apply and strip round trip") {
    const std::vector<double> t{0.5, 1.0, 1.0, 3.0, 4.5};
    CHECK(apply_plan(t, HTPlan{}).to_string() == "EEEEE");
    HTPlan plan{{2, 5}, {1.0, 4.5}};
    const auto layout = apply_plan(t, plan);
    CHECK(layout.to_string() == "EEHEEEH");
    const auto stripped = strip_history(layout);
    REQUIRE(stripped.size() == t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(stripped[i].first == static_cast<std::int64_t>(i));
      CHECK(stripped[i].second == t[i]);
    }
  }

  TEST_CASE("batch plans respect the configuration") {
    const auto schema = testutil::mixed_schema();
    const auto data = testutil::random_dataset(schema, 6, 1, 30, 5);
    const auto batch = make_ordered_batches(data, 6, 64)[0];
    HTConfig cfg;
    cfg.probability = 0.0;
    Rng rng(5);
    for (const auto& p : plan_batch(batch, cfg, rng)) CHECK(p.empty());
    cfg.probability = 1.0;
    cfg.frequency = 0.2;
    const auto plans = plan_batch(batch, cfg, rng);
    for (std::size_t b = 0; b < batch.batch_size; ++b)
      CHECK(plans[b].positions.size() == std::min(batch.lengths[b], ht_count(batch.lengths[b], 0.2)));
    const auto aug = apply_plans(batch, plans);
    for (const auto& layout : aug.layouts) {
      CHECK(layout.size() == aug.max_length);
      layout.validate();
    }
    cfg.enabled = false;
    for (const auto& p : plan_batch(batch, cfg, rng)) CHECK(p.empty());
    CHECK(HTConfig::from_config(KvConfig::parse("ht.placement = uniform\nht.selection = last\n")).placement ==
          HtPlacement::Uniform);
    CHECK_THROWS(HTConfig::from_config(KvConfig::parse("ht.probability = 1.5\n")));
  }
}
