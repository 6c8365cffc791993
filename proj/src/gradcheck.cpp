// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "htseq/rng.hpp"

namespace htseq::ad {

namespace {

double reduce(const Tensor& out, const std::vector<double>& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) total += out.data()[i] * weights[i];
  return total;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& op, std::vector<Tensor> inputs,
                           double tol, double step) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.clear_grad();
  }
  Tensor out = op(inputs);
  Rng rng(0x5eed);
  std::vector<double> weights(out.numel());
  for (double& w : weights) w = out.numel() == 1 ? 1.0 : rng.uniform(-1.0, 1.0);
  Tensor loss = out.numel() == 1 ? out : sum(mul(out, Tensor::from(out.shape(), weights)));
  loss.backward();

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<double> analytic(inputs[i].numel(), 0.0);
    if (inputs[i].has_grad()) std::copy(inputs[i].grad().begin(), inputs[i].grad().end(), analytic.begin());
    auto data = inputs[i].data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double saved = data[k];
      double plus, minus;
      {
        NoGradGuard guard;
        data[k] = saved + step;
        plus = reduce(op(inputs), weights);
        data[k] = saved - step;
        minus = reduce(op(inputs), weights);
      }
      data[k] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double err =
          std::abs(analytic[k] - numeric) / std::max({1.0, std::abs(analytic[k]), std::abs(numeric)});
      ++report.checked;
      if (!(err <= report.max_rel_error) || !std::isfinite(err)) {
        report.max_rel_error = std::isfinite(err) ? err : INFINITY;
        report.worst_input = i;
        report.worst_index = k;
      }
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace htseq::ad
