// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/downstream.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "htseq/error.hpp"

namespace htseq {

namespace {

struct Problem {
  std::size_t n, dim, classes;
  std::vector<double> x;  // n x (dim + 1), standardized with a trailing 1
  std::vector<std::int64_t> y;
  double l2;
  std::vector<double> logits;

  // Objective and gradient at w (classes x (dim + 1)).
  double eval(const double* w, double* grad) {
    const auto width = dim + 1;
    double loss = 0.0;
    if (grad) std::fill(grad, grad + classes * width, 0.0);
    logits.resize(classes);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = &x[i * width];
      double top = -INFINITY;
      for (std::size_t c = 0; c < classes; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < width; ++k) s += w[c * width + k] * xi[k];
        logits[c] = s;
        top = std::max(top, s);
      }
      double z = 0.0;
      for (std::size_t c = 0; c < classes; ++c) z += std::exp(logits[c] - top);
      const double log_z = top + std::log(z);
      loss += log_z - logits[static_cast<std::size_t>(y[i])];
      if (grad)
        for (std::size_t c = 0; c < classes; ++c) {
          const double g = std::exp(logits[c] - log_z) - (static_cast<std::int64_t>(c) == y[i] ? 1.0 : 0.0);
          for (std::size_t k = 0; k < width; ++k) grad[c * width + k] += g * xi[k];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    loss *= inv_n;
    double reg = 0.0;
    for (std::size_t j = 0; j < classes * width; ++j) {
      reg += w[j] * w[j];
      if (grad) grad[j] = grad[j] * inv_n + l2 * w[j];
    }
    return loss + 0.5 * l2 * reg;
  }
};

double f_only(const gsl_vector* v, void* params) { return static_cast<Problem*>(params)->eval(v->data, nullptr); }

void df_only(const gsl_vector* v, void* params, gsl_vector* g) { static_cast<Problem*>(params)->eval(v->data, g->data); }

void fdf(const gsl_vector* v, void* params, double* f, gsl_vector* g) {
  *f = static_cast<Problem*>(params)->eval(v->data, g->data);
}

}  // namespace

LogisticRegression LogisticRegression::fit(const std::vector<std::vector<double>>& features,
                                           std::span<const std::int64_t> labels, std::size_t num_classes,
                                           const LogisticConfig& config, const std::vector<double>* initial) {
  if (features.size() != labels.size()) throw ShapeError("logistic regression: one label per sample required");
  if (features.empty()) throw ValidationError("logistic regression needs samples");
  if (num_classes < 2) throw ValidationError("logistic regression needs at least two classes");
  std::vector<std::int64_t> present;
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw ValidationError("label outside class range");
    if (std::find(present.begin(), present.end(), y) == present.end()) present.push_back(y);
  }
  if (present.size() < 2) throw ValidationError("logistic regression needs at least two classes present");

  LogisticRegression model;
  model.classes_ = num_classes;
  model.dim_ = features.front().size();
  const auto n = features.size(), dim = model.dim_, width = dim + 1;
  model.mean_.assign(dim, 0.0);
  model.scale_.assign(dim, 1.0);
  for (const auto& row : features) {
    if (row.size() != dim) throw ShapeError("logistic regression: feature rows differ in width");
    for (std::size_t k = 0; k < dim; ++k) model.mean_[k] += row[k];
  }
  for (auto& m : model.mean_) m /= static_cast<double>(n);
  for (std::size_t k = 0; k < dim; ++k) {
    double var = 0.0;
    for (const auto& row : features) var += (row[k] - model.mean_[k]) * (row[k] - model.mean_[k]);
    const double sd = std::sqrt(var / static_cast<double>(n));
    model.scale_[k] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }

  Problem problem{n, dim, num_classes, std::vector<double>(n * width), {labels.begin(), labels.end()}, config.l2, {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dim; ++k) problem.x[i * width + k] = (features[i][k] - model.mean_[k]) * model.scale_[k];
    problem.x[i * width + dim] = 1.0;
  }

  const auto size = num_classes * width;
  gsl_set_error_handler_off();
  gsl_multimin_function_fdf fn{&f_only, &df_only, &fdf, size, &problem};
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> start(gsl_vector_calloc(size), &gsl_vector_free);
  if (initial) {
    if (initial->size() != size) throw ShapeError("logistic regression: initial point has the wrong size");
    std::copy(initial->begin(), initial->end(), start->data);
  }
  std::unique_ptr<gsl_multimin_fdfminimizer, decltype(&gsl_multimin_fdfminimizer_free)> solver(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, size), &gsl_multimin_fdfminimizer_free);
  gsl_multimin_fdfminimizer_set(solver.get(), &fn, start.get(), 0.1, 0.1);
  std::size_t iter = 0;
  while (iter < config.max_iterations) {
    if (gsl_multimin_test_gradient(solver->gradient, config.grad_tol) == GSL_SUCCESS) break;
    ++iter;
    // A failed line search means no further progress is possible from here.
    if (gsl_multimin_fdfminimizer_iterate(solver.get()) != GSL_SUCCESS) break;
  }
  model.weights_.assign(solver->x->data, solver->x->data + size);
  model.objective_ = solver->f;
  model.iterations_ = iter;
  if (!std::isfinite(model.objective_)) throw NumericError("logistic regression diverged");
  return model;
}

std::vector<double> LogisticRegression::probabilities(std::span<const double> x) const {
  if (x.size() != dim_) throw ShapeError("logistic regression: feature width mismatch");
  const auto width = dim_ + 1;
  std::vector<double> p(classes_);
  for (std::size_t c = 0; c < classes_; ++c) {
    double s = weights_[c * width + dim_];
    for (std::size_t k = 0; k < dim_; ++k) s += weights_[c * width + k] * (x[k] - mean_[k]) * scale_[k];
    p[c] = s;
  }
  const double top = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (auto& v : p) z += (v = std::exp(v - top));
  for (auto& v : p) v /= z;
  return p;
}

std::int64_t LogisticRegression::predict(std::span<const double> x) const {
  const auto p = probabilities(x);
  return static_cast<std::int64_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

double roc_auc(std::span<const double> scores, std::span<const std::int64_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: one label per score required");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0, negatives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      const auto y = labels[order[k]];
      if (y != 0 && y != 1) throw ValidationError("roc_auc labels must be 0 or 1");
      if (y == 1) {
        positive_rank_sum += midrank;
        ++positives;
      } else {
        ++negatives;
      }
    }
    i = j;
  }
  if (positives == 0 || negatives == 0) throw ValidationError("roc_auc needs both classes present");
  const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double accuracy(std::span<const std::int64_t> predicted, std::span<const std::int64_t> labels) {
  if (predicted.size() != labels.size()) throw ShapeError("accuracy: size mismatch");
  if (labels.empty()) throw ValidationError("accuracy of no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace htseq
