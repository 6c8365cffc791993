// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "op_cases.hpp"
#include "htseq/attention.hpp"
#include "htseq/error.hpp"
#include "htseq/gradcheck.hpp"
#include "htseq/optim.hpp"

using namespace htseq;
using ad::Tensor;
using testutil::random_causal_mask;
using testutil::random_tensor;

namespace {

using Op = std::function<Tensor(const std::vector<Tensor>&)>;

// Ten random shapes per op; `make` builds inputs from (rows, cols, inner, rng).
void check_op(const char* name, const Op& op,
              const std::function<std::vector<Tensor>(std::size_t, std::size_t, std::size_t, Rng&)>& make) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(Rng::derive(seed, name));
    const auto r = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const auto c = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto report = ad::grad_check(op, make(r, c, k, rng));
    INFO(name << " seed " << seed << " rel err " << report.max_rel_error);
    CHECK(report.passed);
    CHECK(report.checked > 0);
  }
}

}  // namespace

TEST_SUITE("diffcore") {
  TEST_CASE("every primitive op passes the finite-difference check on ten random shapes") {
    for (const auto& c : testutil::op_cases()) check_op(c.name.c_str(), c.op, c.make);
  }

  TEST_CASE("grad_check flags a corrupted backward and accepts the identity") {
    Rng rng(1);
    auto x = random_tensor({3, 2}, rng);
    CHECK(ad::grad_check([](auto& in) { return in[0]; }, {x}, 1e-12).passed);
    auto broken = [](const std::vector<Tensor>& in) {
      auto parent = in[0].ptr();
      std::vector<double> out(in[0].data().begin(), in[0].data().end());
      for (double& v : out) v *= 2.0;
      return ad::make_result(in[0].shape(), out, {in[0]}, [parent](ad::Node& self) {
        auto g = ad::grad_of(parent);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * self.grad[i];  // should be 2
      });
    };
    CHECK_FALSE(ad::grad_check(broken, {x}).passed);
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    CHECK(ad::grad_check([](auto& in) { return ad::matmul(in[0], in[1]); }, {a, b}).passed);
  }

  TEST_CASE("masked softmax attention: one-hot rows, singleton masks, exact zeros") {
    Rng rng(2);
    auto v = random_tensor({1, 3}, rng);
    AttentionMask one(1);
    one.set(0, 0, true);
    auto out = ad::masked_softmax_attention(random_tensor({1, 3}, rng), random_tensor({1, 3}, rng), v, one);
    for (std::size_t c = 0; c < 3; ++c) CHECK(out.at(0, c) == doctest::Approx(v.at(0, c)).epsilon(1e-15));

    const std::size_t n = 5;
    auto q = random_tensor({n, 4}, rng), k = random_tensor({n, 4}, rng), vv = random_tensor({n, 4}, rng);
    AttentionMask mask(n);
    for (std::size_t i = 0; i < n; ++i) mask.set(i, i / 2, true);  // row i sees only column i/2
    auto res = ad::masked_softmax_attention(q, k, vv, mask);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 4; ++c) CHECK(res.at(i, c) == vv.at(i / 2, c));

    // Gradient through a disallowed edge is exactly zero.
    Rng mrng(5);
    auto random_mask = random_causal_mask(n, mrng);
    auto loss = ad::sum(ad::slice_rows(ad::masked_softmax_attention(q, k, vv, random_mask), 3, 4));
    vv.clear_grad();
    loss.backward();
    for (std::size_t j = 0; j < n; ++j)
      if (!random_mask.at(3, j))
        for (std::size_t c = 0; c < 4; ++c) CHECK(vv.grad()[j * 4 + c] == 0.0);

    AttentionMask empty(2);
    empty.set(0, 0, true);
    auto q2 = random_tensor({2, 2}, rng);
    CHECK_THROWS_AS(ad::masked_softmax_attention(q2, q2, q2, empty), ValidationError);
    std::vector<std::uint8_t> pad{0, 1};
    auto padded = ad::masked_softmax_attention(q2, q2, q2, empty, pad);
    CHECK(padded.at(1, 0) == 0.0);
    CHECK(padded.at(1, 1) == 0.0);
  }

  TEST_CASE("attention matches a per-row softmax oracle for causal and non-causal masks") {
    Rng rng(11);
    const std::size_t n = 7, d = 4, heads = 2, dh = d / heads;
    auto q = random_tensor({n, d}, rng), k = random_tensor({n, d}, rng), v = random_tensor({n, d}, rng);
    auto oracle = [&](const AttentionMask& mask) {
      std::vector<double> out(n * d, 0.0);
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<double> w(n, 0.0);
          double z = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            if (!mask.at(i, j)) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += q.at(i, h * dh + c) * k.at(j, h * dh + c);
            z += w[j] = std::exp(s / std::sqrt(static_cast<double>(dh)));
          }
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < dh; ++c) out[i * d + h * dh + c] += w[j] / z * v.at(j, h * dh + c);
        }
      return out;
    };
    auto causal = random_causal_mask(n, rng);
    AttentionMask future(n);
    for (std::size_t i = 0; i < n; ++i) {
      future.set(i, (i + 2) % n, true);
      future.set(i, i, true);
    }
    for (const auto* mask : {&causal, &future}) {
      const auto pattern = ad::AttentionPattern::from_mask(*mask);
      auto got = ad::masked_attention(q, k, v, pattern, heads);
      const auto want = oracle(*mask);
      for (std::size_t e = 0; e < n * d; ++e) CHECK(got.data()[e] == doctest::Approx(want[e]).epsilon(1e-12));
      CHECK(ad::grad_check([&](auto& in) { return ad::masked_attention(in[0], in[1], in[2], pattern, heads); },
                           {q, k, v})
                .passed);
    }
  }

  TEST_CASE("allowed attention rows sum to one") {
    Rng rng(3);
    const std::size_t n = 6;
    auto q = random_tensor({n, 2}, rng), k = random_tensor({n, 2}, rng);
    auto ones = Tensor::from({n, 1}, std::vector<double>(n, 1.0));
    auto mask = random_causal_mask(n, rng);
    // With V = 1 every output equals the row's total weight.
    auto v = ad::concat_cols({ones, ones});
    auto out = ad::masked_softmax_attention(q, k, v, mask);
    for (std::size_t i = 0; i < n; ++i) CHECK(out.at(i, 0) == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("layer norm closed forms") {
    auto x = Tensor::from({1, 3}, {2.0, 2.0, 2.0});
    auto g = Tensor::from({3}, {1.5, -1.0, 2.0});
    auto b = Tensor::from({3}, {0.1, 0.2, 0.3});
    auto y = ad::layer_norm(x, g, b);
    for (std::size_t c = 0; c < 3; ++c) CHECK(y.at(0, c) == doctest::Approx(b.data()[c]).epsilon(1e-14));
    auto pair = ad::layer_norm(Tensor::from({1, 2}, {1.0, -1.0}), Tensor::from({2}, {1.0, 1.0}),
                               Tensor::from({2}, {0.0, 0.0}));
    // mean 0, variance 1: output is x / sqrt(1 + eps).
    CHECK(pair.at(0, 0) == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
    CHECK(pair.at(0, 1) == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  }

  TEST_CASE("cross entropy against a direct log-sum-exp") {
    const std::int64_t classes = 6;
    auto uniform = Tensor::from({2, static_cast<std::size_t>(classes)}, std::vector<double>(2 * classes, 0.3));
    std::vector<std::int64_t> t{1, 4};
    CHECK(ad::cross_entropy(uniform, t).item() == doctest::Approx(std::log(6.0)).epsilon(1e-14));
    auto confident = Tensor::from({1, 3}, {0.0, 200.0, 0.0});
    std::vector<std::int64_t> t1{1};
    CHECK(ad::cross_entropy(confident, t1).item() < 1e-80);

    Rng rng(4);
    auto logits = random_tensor({7, 5}, rng, false, 3.0);
    std::vector<std::int64_t> targets(7);
    std::vector<std::uint8_t> valid(7);
    for (std::size_t i = 0; i < 7; ++i) {
      targets[i] = rng.uniform_int(0, 4);
      valid[i] = i % 3 != 0;
    }
    double total = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < 7; ++i) {
      if (!valid[i]) continue;
      double z = 0.0;
      for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits.at(i, c));
      total += std::log(z) - logits.at(i, static_cast<std::size_t>(targets[i]));
      ++count;
    }
    CHECK(std::fabs(ad::cross_entropy(logits, targets, valid).item() - total / count) < 1e-10);
    std::vector<std::uint8_t> none(7, 0);
    CHECK_THROWS_AS(ad::cross_entropy(logits, targets, none), ValidationError);
  }

  TEST_CASE("mae values and subgradients") {
    auto pred = Tensor::from({2, 1}, {1.0, -3.0}, true);
    std::vector<double> zero{0.0, 0.0};
    auto loss = ad::mae(pred, zero);
    CHECK(loss.item() == 2.0);
    loss.backward();
    CHECK(pred.grad()[0] == 0.5);
    CHECK(pred.grad()[1] == -0.5);
    auto same = Tensor::from({2, 1}, {1.5, 2.5}, true);
    std::vector<double> target{1.5, 2.5};
    auto tie = ad::mae(same, target);
    CHECK(tie.item() == 0.0);
    tie.backward();
    CHECK(same.grad()[0] == 0.0);
    std::vector<std::uint8_t> none(2, 0);
    CHECK_THROWS_AS(ad::mae(same, target, none), ValidationError);
  }

  TEST_CASE("adam: zero gradients, single-step closed form, quadratic bowl") {
    ParameterStore params;
    auto& w = params.add("w", Tensor::from({2}, {0.5, -0.25}));
    Adam adam;
    for (int i = 0; i < 5; ++i) {
      params.zero_grad();
      w.grad();  // zero buffer
      adam.step(params);
    }
    CHECK(w.data()[0] == 0.5);
    CHECK(w.data()[1] == -0.25);

    ParameterStore one;
    auto& x = one.add("x", Tensor::from({1}, {0.0}));
    Adam single;
    x.grad()[0] = 1.0;
    single.step(one);
    // m_hat = 1, v_hat = 1 after bias correction.
    CHECK(x.data()[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));

    ParameterStore bowl;
    auto& z = bowl.add("z", Tensor::from({1}, {1.0}));
    Adam opt(AdamConfig{0.01});
    double previous = 1.0;
    int increases = 0;
    for (int i = 0; i < 500; ++i) {
      bowl.zero_grad();
      auto loss = ad::mul(z, z);
      loss.backward();
      opt.step(bowl);
      const double now = z.data()[0] * z.data()[0];
      increases += now > previous;
      previous = now;
    }
    CHECK(std::fabs(z.data()[0]) < 1e-2);
    CHECK(increases < 50);

    z.grad()[0] = NAN;
    CHECK_THROWS_WITH_AS(opt.step(bowl), doctest::Contains("z"), NumericError);
  }

  TEST_CASE("repeated forward and backward are bitwise identical") {
    auto run = [] {
      Rng rng(11);
      auto a = random_tensor({4, 3}, rng), b = random_tensor({3, 5}, rng);
      auto loss = ad::mean(ad::relu(ad::matmul(a, b)));
      loss.backward();
      std::vector<double> out(a.grad().begin(), a.grad().end());
      out.push_back(loss.item());
      return out;
    };
    CHECK(run() == run());
  }

  TEST_CASE("checkpoint round trip and mismatch errors") {
    Rng rng(6);
    ParameterStore params;
    params.add("alpha", random_tensor({2, 3}, rng));
    params.add("beta", random_tensor({4}, rng));
    const auto path = std::filesystem::temp_directory_path() / "htseq_ckpt_test.bin";
    save_checkpoint(params, path);
    const auto bytes = checkpoint_bytes(params);
    CHECK(bytes.substr(0, 8) == "HTSQCKPT");
    // 8 magic + 4 version + 4 count + (4 + 5 + 4 + 16 + 48) + (4 + 4 + 4 + 8 + 32)
    CHECK(bytes.size() == 8 + 4 + 4 + (4 + 5 + 4 + 16 + 48) + (4 + 4 + 4 + 8 + 32));
    ParameterStore other;
    other.add("alpha", Tensor::zeros({2, 3}));
    other.add("beta", Tensor::zeros({4}));
    load_checkpoint(other, path);
    CHECK(other.snapshot() == params.snapshot());
    ParameterStore wrong;
    wrong.add("alpha", Tensor::zeros({3, 2}));
    wrong.add("beta", Tensor::zeros({4}));
    CHECK_THROWS(load_checkpoint(wrong, path));
    CHECK_THROWS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)));
    std::filesystem::remove(path);
  }
}
