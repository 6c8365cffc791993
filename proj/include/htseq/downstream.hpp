// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace htseq {

struct LogisticConfig {
  double l2 = 1e-3;
  double grad_tol = 1e-6;
  std::size_t max_iterations = 2000;
};

/// Multinomial logistic regression on standardized features.
///
/// The objective is the mean negative log-likelihood plus (l2 / 2) times the
/// squared norm of all coefficients, intercepts included, minimized with BFGS.
class LogisticRegression {
 public:
  /// `features` holds one row of `dim` values per sample.
  static LogisticRegression fit(const std::vector<std::vector<double>>& features, std::span<const std::int64_t> labels,
                                std::size_t num_classes, const LogisticConfig& config = {},
                                const std::vector<double>* initial = nullptr);

  std::size_t num_classes() const { return classes_; }
  std::size_t dim() const { return dim_; }
  /// Coefficients, row-major (classes x (dim + 1)), intercept last.
  const std::vector<double>& coefficients() const { return weights_; }
  double final_objective() const { return objective_; }
  std::size_t iterations() const { return iterations_; }

  std::vector<double> probabilities(std::span<const double> x) const;
  std::int64_t predict(std::span<const double> x) const;

 private:
  std::size_t classes_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> mean_, scale_;
  std::vector<double> weights_;
  double objective_ = 0.0;
  std::size_t iterations_ = 0;
};

/// Probability that a random positive outranks a random negative, with ties
/// counted as one half. Labels are 0 or 1 and both must be present.
double roc_auc(std::span<const double> scores, std::span<const std::int64_t> labels);

double accuracy(std::span<const std::int64_t> predicted, std::span<const std::int64_t> labels);

}  // namespace htseq
