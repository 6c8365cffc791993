// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "htseq/error.hpp"
#include "htseq/rng.hpp"

namespace htseq::ad {

namespace {

thread_local bool g_grad_enabled = true;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

MatMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

ConstMatMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return Shape{rows, cols}; }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("tensor shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from(Shape{}, {value}); }

std::size_t Tensor::rows() const {
  const auto& s = node_->shape;
  if (s.empty()) return 1;
  return std::accumulate(s.begin(), s.end() - 1, std::size_t{1}, std::multiplies<>());
}

std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  return s.empty() ? 1 : s.back();
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

std::span<double> Tensor::grad() {
  if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void Tensor::backward() {
  if (numel() != 1) throw ShapeError("backward() needs a single-element tensor, got " + shape_string(shape()));
  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (auto& p : parents) node->parents.push_back(p.ptr());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

std::span<double> grad_of(const NodePtr& parent) {
  if (!parent->requires_grad) return {};
  if (parent->grad.size() != parent->value.size()) parent->grad.assign(parent->value.size(), 0.0);
  return parent->grad;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k || b.shape().size() > 2)
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  std::vector<double> out(n * m);
  as_matrix(std::span<double>(out), n, m).noalias() = as_matrix(a.data(), n, k) * as_matrix(b.data(), k, m);
  Shape shape = a.shape().size() >= 2 ? a.shape() : matrix_shape(n, k);
  shape.back() = m;
  return make_result(std::move(shape), std::move(out), {a, b}, [n, k, m](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    auto dc = as_matrix(std::span<const double>(self.grad), n, m);
    if (auto ga = grad_of(pa); !ga.empty())
      as_matrix(ga, n, k).noalias() += dc * as_matrix(std::span<const double>(pb->value), k, m).transpose();
    if (auto gb = grad_of(pb); !gb.empty())
      as_matrix(gb, k, m).noalias() += as_matrix(std::span<const double>(pa->value), n, k).transpose() * dc;
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const auto n = x.rows(), k = x.cols(), m = w.cols();
  if (w.rows() != k || bias.numel() != m)
    throw ShapeError("linear: x " + shape_string(x.shape()) + ", w " + shape_string(w.shape()) + ", b " +
                     shape_string(bias.shape()));
  std::vector<double> out(n * m);
  auto om = as_matrix(std::span<double>(out), n, m);
  om.noalias() = as_matrix(x.data(), n, k) * as_matrix(w.data(), k, m);
  om.rowwise() += as_matrix(bias.data(), 1, m).row(0);
  Shape shape = x.shape().size() >= 2 ? x.shape() : matrix_shape(n, k);
  shape.back() = m;
  return make_result(std::move(shape), std::move(out), {x, w, bias}, [n, k, m](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    auto dc = as_matrix(std::span<const double>(self.grad), n, m);
    if (auto gx = grad_of(px); !gx.empty())
      as_matrix(gx, n, k).noalias() += dc * as_matrix(std::span<const double>(pw->value), k, m).transpose();
    if (auto gw = grad_of(pw); !gw.empty())
      as_matrix(gw, k, m).noalias() += as_matrix(std::span<const double>(px->value), n, k).transpose() * dc;
    // Plain row-order sum: Eigen's vectorized column reduction changes its
    // summation order with buffer alignment, which breaks run-to-run equality.
    if (auto gb = grad_of(pb); !gb.empty())
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gb[c] += self.grad[r * m + c];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (auto g = grad_of(p); !g.empty())
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  const auto n = a.rows(), m = a.cols();
  if (row.numel() != m) throw ShapeError("add_row: " + shape_string(a.shape()) + " + " + shape_string(row.shape()));
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += row.data()[c];
  return make_result(a.shape(), std::move(out), {a, row}, [n, m](Node& self) {
    if (auto ga = grad_of(self.parents[0]); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    if (auto gr = grad_of(self.parents[1]); !gr.empty())
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gr[c] += self.grad[r * m + c];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto ga = grad_of(self.parents[0]); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    if (auto gb = grad_of(self.parents[1]); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (auto ga = grad_of(pa); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * pb->value[i];
    if (auto gb = grad_of(pb); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * pa->value[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    if (auto g = grad_of(self.parents[0]); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& p = self.parents[0];
    if (auto g = grad_of(p); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i)
        if (p->value[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const auto n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto w = widths[i];
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(parts[i].data().begin() + r * w, w, out.begin() + r * total + offset);
    offset += w;
  }
  return make_result(matrix_shape(n, total), std::move(out), parts, [n, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const auto w = widths[i];
      if (auto g = grad_of(self.parents[i]); !g.empty())
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * total + off + c];
      off += w;
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const auto m = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != m) throw ShapeError("concat_rows: column count mismatch");
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * m);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result(matrix_shape(total, m), std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const auto n = p->value.size();
      if (auto g = grad_of(p); !g.empty())
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      off += n;
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  const auto m = a.cols();
  if (begin > end || end > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  std::vector<double> out(a.data().begin() + begin * m, a.data().begin() + end * m);
  return make_result(matrix_shape(end - begin, m), std::move(out), {a}, [begin, m](Node& self) {
    if (auto g = grad_of(self.parents[0]); !g.empty())
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * m + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const auto n = a.rows(), m = a.cols();
  if (begin > end || end > m) throw ShapeError("slice_cols: range out of bounds");
  const auto w = end - begin;
  std::vector<double> out(n * w);
  for (std::size_t r = 0; r < n; ++r) std::copy_n(a.data().begin() + r * m + begin, w, out.begin() + r * w);
  return make_result(matrix_shape(n, w), std::move(out), {a}, [n, m, w, begin](Node& self) {
    if (auto g = grad_of(self.parents[0]); !g.empty())
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < w; ++c) g[r * m + begin + c] += self.grad[r * w + c];
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  const auto n = a.rows(), m = a.cols();
  std::vector<double> out(indices.size() * m);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n) throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " out of range");
    std::copy_n(a.data().begin() + indices[r] * m, m, out.begin() + r * m);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(matrix_shape(indices.size(), m), std::move(out), {a}, [idx = std::move(idx), m](Node& self) {
    if (auto g = grad_of(self.parents[0]); !g.empty())
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < m; ++c) g[idx[r] * m + c] += self.grad[r * m + c];
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result(Shape{}, {total}, {a}, [](Node& self) {
    if (auto g = grad_of(self.parents[0]); !g.empty())
      for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean_rows(const Tensor& a) {
  const auto n = a.rows(), m = a.cols();
  if (n == 0) throw ShapeError("mean_rows of an empty tensor");
  std::vector<double> out(m, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[c] += a.data()[r * m + c];
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= inv;
  return make_result(matrix_shape(1, m), std::move(out), {a}, [n, m, inv](Node& self) {
    if (auto g = grad_of(self.parents[0]); !g.empty())
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) g[r * m + c] += self.grad[c] * inv;
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto n = x.rows(), m = x.cols();
  if (gain.numel() != m || bias.numel() != m) throw ShapeError("layer_norm: gain/bias width mismatch");
  std::vector<double> out(n * m);
  auto xhat = std::make_shared<std::vector<double>>(n * m);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * m;
    double mu = 0.0;
    for (std::size_t c = 0; c < m; ++c) mu += row[c];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t c = 0; c < m; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < m; ++c) {
      const double h = (row[c] - mu) * is;
      (*xhat)[r * m + c] = h;
      out[r * m + c] = h * gv[c] + bv[c];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias}, [n, m, xhat, inv_std](Node& self) {
    auto& pg = self.parents[1];
    auto gx = grad_of(self.parents[0]);
    auto gg = grad_of(pg);
    auto gb = grad_of(self.parents[2]);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < n; ++r) {
      const double* dy = self.grad.data() + r * m;
      const double* h = xhat->data() + r * m;
      if (!gg.empty())
        for (std::size_t c = 0; c < m; ++c) gg[c] += dy[c] * h[c];
      if (!gb.empty())
        for (std::size_t c = 0; c < m; ++c) gb[c] += dy[c];
      if (!gx.empty()) {
        double mean_d = 0.0, mean_dh = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
          const double d = dy[c] * pg->value[c];
          mean_d += d;
          mean_dh += d * h[c];
        }
        mean_d *= inv_m;
        mean_dh *= inv_m;
        const double is = (*inv_std)[r];
        for (std::size_t c = 0; c < m; ++c)
          gx[r * m + c] += is * (dy[c] * pg->value[c] - mean_d - h[c] * mean_dh);
      }
    }
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform01() < rate ? 0.0 : keep_scale;
    out[i] = x.data()[i] * (*mask)[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [mask](Node& self) {
    if (auto g = grad_of(self.parents[0]); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, std::span<const std::uint8_t> valid) {
  const auto n = logits.rows(), c = logits.cols();
  if (targets.size() != n) throw ShapeError("cross_entropy: one target per row required");
  if (!valid.empty() && valid.size() != n) throw ShapeError("cross_entropy: valid mask length mismatch");
  auto probs = std::make_shared<std::vector<double>>(n * c, 0.0);
  auto rows = std::make_shared<std::vector<std::size_t>>();
  double total = 0.0;
  const auto lv = logits.data();
  for (std::size_t r = 0; r < n; ++r) {
    if (!valid.empty() && !valid[r]) continue;
    const auto t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= c)
      throw ValidationError("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(c) + ")");
    const double* row = lv.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[t];
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] = std::exp(row[j] - lse);
    rows->push_back(r);
  }
  if (rows->empty()) throw ValidationError("cross_entropy: no valid positions");
  const double inv = 1.0 / static_cast<double>(rows->size());
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  return make_result(Shape{}, {total * inv}, {logits}, [probs, rows, tgt = std::move(tgt), c, inv](Node& self) {
    auto g = grad_of(self.parents[0]);
    if (g.empty()) return;
    const double up = self.grad[0] * inv;
    for (auto r : *rows) {
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += up * (*probs)[r * c + j];
      g[r * c + static_cast<std::size_t>(tgt[r])] -= up;
    }
  });
}

Tensor mae(const Tensor& pred, std::span<const double> target, std::span<const std::uint8_t> valid) {
  const auto n = pred.numel();
  if (target.size() != n) throw ShapeError("mae: prediction/target size mismatch");
  if (!valid.empty() && valid.size() != n) throw ShapeError("mae: valid mask length mismatch");
  auto sign = std::make_shared<std::vector<double>>(n, 0.0);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid.empty() && !valid[i]) continue;
    const double d = pred.data()[i] - target[i];
    total += std::abs(d);
    (*sign)[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    ++count;
  }
  if (count == 0) throw ValidationError("mae: no valid positions");
  const double inv = 1.0 / static_cast<double>(count);
  return make_result(Shape{}, {total * inv}, {pred}, [sign, inv](Node& self) {
    if (auto g = grad_of(self.parents[0]); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * inv * (*sign)[i];
  });
}

}  // namespace htseq::ad
