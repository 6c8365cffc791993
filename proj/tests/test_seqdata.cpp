// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "htseq/error.hpp"
#include "htseq/seqdata.hpp"

using namespace htseq;

namespace {

Schema one_field() { return Schema({{"code", FieldKind::Categorical, 4}}); }

std::vector<double> sorted_positive(const Dataset& d) {
  std::vector<double> v;
  for (const auto& s : d.sequences)
    for (double t : s.timestamps)
      if (t > 0) v.push_back(t);
  std::sort(v.begin(), v.end());
  return v;
}

// Independent linear-interpolation percentile.
double oracle_percentile(const std::vector<double>& sorted, double q) {
  const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (rank - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

TEST_SUITE("seqdata") {
  TEST_CASE("schema validation and config form") {
    CHECK_THROWS_AS(Schema({{"a", FieldKind::Categorical, 1}}), ValidationError);
    CHECK_THROWS_AS(Schema({{"a", FieldKind::Numerical, 0}, {"a", FieldKind::Categorical, 3}}), ValidationError);
    const auto s = testutil::mixed_schema();
    CHECK(s.categorical() == std::vector<std::size_t>{0, 2});
    CHECK(s.numerical() == std::vector<std::size_t>{1});
    CHECK(Schema::from_config(s.to_config()) == s);
    CHECK(Schema::from_config(KvConfig::parse("x = categorical:7\ny = numerical\n")).fields().size() == 2);
    CHECK_THROWS(Schema::from_config(KvConfig::parse("x = text\n")));
  }

  TEST_CASE("loading rejects bad records with line numbers and field names") {
    const auto schema = one_field();
    CHECK(parse_dataset("", schema).empty());
    const std::string good = R"({"id":"a","labels":{"y":1},"events":[{"t":0,"code":1},{"t":2.5,"code":3}]})";
    const auto d = parse_dataset(good + "\n", schema);
    REQUIRE(d.size() == 1);
    CHECK(d.sequences[0].timestamps == std::vector<double>{0.0, 2.5});
    CHECK(d.sequences[0].categorical[0] == std::vector<std::int64_t>{1, 3});
    CHECK(d.sequences[0].labels.at("y") == 1);

    const std::string backwards = R"({"id":"b","labels":{},"events":[{"t":3.0,"code":1},{"t":1.0,"code":1}]})";
    CHECK_THROWS_AS(parse_dataset(backwards, schema), ValidationError);
    const std::string out_of_range = R"({"id":"c","labels":{},"events":[{"t":0,"code":4}]})";
    CHECK_THROWS_WITH_AS(parse_dataset(out_of_range, schema), doctest::Contains("code"), ValidationError);
    CHECK_THROWS_WITH_AS(parse_dataset(good + "\n{not json\n", schema), doctest::Contains("line 2"), ParseError);
  }

  TEST_CASE("datasets round trip through NDJSON files") {
    const auto schema = testutil::mixed_schema();
    const auto data = testutil::random_dataset(schema, 6, 1, 9, 3);
    const auto path = std::filesystem::temp_directory_path() / "htseq_roundtrip.ndjson";
    save_dataset(data, path);
    const auto back = load_dataset(path, schema);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      CHECK(back.sequences[i].id == data.sequences[i].id);
      CHECK(back.sequences[i].timestamps == data.sequences[i].timestamps);
      CHECK(back.sequences[i].numerical == data.sequences[i].numerical);
      CHECK(back.sequences[i].categorical == data.sequences[i].categorical);
      CHECK(back.sequences[i].labels == data.sequences[i].labels);
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("split sizes, determinism and partition") {
    const auto data = testutil::random_dataset(one_field(), 10, 1, 3, 1);
    const auto split = split_dataset(data, {0.8, 0.1, 0.1}, 7);
    CHECK(split.train.size() == 8);
    CHECK(split.validation.size() == 1);
    CHECK(split.test.size() == 1);
    const auto again = split_dataset(data, {0.8, 0.1, 0.1}, 7);
    CHECK(again.test.sequences[0].id == split.test.sequences[0].id);
    std::set<std::string> ids;
    for (const auto* part : {&split.train, &split.validation, &split.test})
      for (const auto& s : part->sequences) ids.insert(s.id);
    CHECK(ids.size() == 10);
    CHECK_THROWS_AS(split_dataset(data, {0.5, 0.5, 0.5}, 7), ConfigError);
    CHECK_THROWS_AS(split_dataset(data, {1.0, 0.0, 0.0}, 7), ConfigError);
  }

  TEST_CASE("split depends on ids, not on input order") {
    auto data = testutil::random_dataset(one_field(), 30, 1, 3, 2);
    const auto a = split_dataset(data, {0.6, 0.2, 0.2}, 5);
    std::reverse(data.sequences.begin(), data.sequences.end());
    const auto b = split_dataset(data, {0.6, 0.2, 0.2}, 5);
    std::set<std::string> ta, tb;
    for (const auto& s : a.test.sequences) ta.insert(s.id);
    for (const auto& s : b.test.sequences) tb.insert(s.id);
    CHECK(ta == tb);
  }

  TEST_CASE("batches keep the most recent events and pad the rest") {
    const auto schema = one_field();
    Rng rng(4);
    auto five = testutil::random_sequence(schema, 5, rng, "five");
    auto three = testutil::random_sequence(schema, 3, rng, "three");
    const auto batch = make_padded_batch({&three, &five}, schema, 5);
    CHECK(batch.max_length == 5);
    CHECK(batch.lengths == std::vector<std::size_t>{3, 5});
    CHECK(batch.is_pad(0, 3));
    CHECK(batch.is_pad(0, 4));
    CHECK_FALSE(batch.is_pad(1, 4));

    const auto cut = make_padded_batch({&five}, schema, 3);
    CHECK(cut.lengths[0] == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(cut.timestamp(0, i) == five.timestamps[i + 2]);
      CHECK(cut.categorical[0][cut.index(0, i)] == five.categorical[0][i + 2]);
    }
    const auto truncated = truncate_suffix(five, 3);
    CHECK(std::is_sorted(truncated.timestamps.begin(), truncated.timestamps.end()));
  }

  TEST_CASE("batch order is seed-deterministic and covers every sequence") {
    const auto data = testutil::random_dataset(one_field(), 23, 1, 6, 8);
    const auto a = make_batches(data, 5, 4, 11);
    const auto b = make_batches(data, 5, 4, 11);
    const auto c = make_batches(data, 5, 4, 12);
    REQUIRE(a.size() == 5);
    std::vector<std::string> ia, ib, ic;
    for (const auto& x : a) ia.insert(ia.end(), x.ids.begin(), x.ids.end());
    for (const auto& x : b) ib.insert(ib.end(), x.ids.begin(), x.ids.end());
    for (const auto& x : c) ic.insert(ic.end(), x.ids.begin(), x.ids.end());
    CHECK(ia == ib);
    CHECK(ia != ic);
    CHECK(std::set<std::string>(ia.begin(), ia.end()).size() == 23);
    for (const auto& x : a)
      for (auto len : x.lengths) CHECK(len <= 4);
  }

  TEST_CASE("time statistics follow the percentile rule") {
    const auto data = testutil::random_dataset(one_field(), 40, 1, 20, 9);
    const auto stats = compute_time_stats(data);
    const auto positive = sorted_positive(data);
    std::vector<double> all;
    for (const auto& s : data.sequences) all.insert(all.end(), s.timestamps.begin(), s.timestamps.end());
    std::sort(all.begin(), all.end());
    const double m = std::max(1e-6, oracle_percentile(positive, 1.0));
    CHECK(stats.min_scale == doctest::Approx(m).epsilon(1e-12));
    CHECK(stats.max_scale == doctest::Approx(std::max(m, oracle_percentile(all, 99.0))).epsilon(1e-12));

    Dataset single;
    EventSequence s;
    s.id = "x";
    s.timestamps = {5.0};
    s.categorical = {{0}};
    single.sequences.push_back(s);
    const auto one = compute_time_stats(single);
    CHECK(one.min_scale == 5.0);
    CHECK(one.max_scale == 5.0);
    single.sequences[0].timestamps = {0.0};
    CHECK_THROWS(compute_time_stats(single));
  }

  TEST_CASE("numerical standardization uses training statistics") {
    const auto schema = testutil::mixed_schema();
    auto data = testutil::random_dataset(schema, 10, 2, 8, 10);
    const auto stats = compute_numerical_stats(data);
    standardize_numerical(data, stats);
    const auto after = compute_numerical_stats(data);
    CHECK(std::fabs(after.mean[0]) < 1e-12);
    CHECK(after.stddev[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
}
