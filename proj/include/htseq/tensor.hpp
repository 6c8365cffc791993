// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace htseq {
class Rng;
}

namespace htseq::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the computation graph.
///
/// `backward` reads this node's grad and accumulates into its parents. Leaves
/// (parameters, inputs) have no backward function.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;
};

/// Shared handle to a graph node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  /// Matrix view: all leading dimensions flattened into rows.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return node_->value; }
  std::span<const double> data() const { return node_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; allocated as zeros on first access.
  std::span<double> grad();
  std::span<const double> grad() const { return node_->grad; }
  /// Drops the gradient buffer (has_grad() becomes false).
  void clear_grad() { node_->grad.clear(); }

  /// Reverse pass from a single-element tensor.
  void backward();

  /// New leaf sharing no storage with this tensor.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const NodePtr& ptr() const { return node_; }

 private:
  NodePtr node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op result. When recording and any parent requires grad, the
/// result keeps its parents and the backward function; otherwise it is a leaf.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);

/// Gradient buffer of a parent inside a backward function, or empty when the
/// parent does not require grad.
std::span<double> grad_of(const NodePtr& parent);

// Primitive ops. Shapes use the matrix view (rows x cols) unless noted.

Tensor matmul(const Tensor& a, const Tensor& b);
/// x * w + bias, bias broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
/// a + row, `row` broadcast over the rows of `a`.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
/// Output row r = a[indices[r]]; repeated indices accumulate on backward.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column-wise mean over rows, shape (1, cols).
Tensor mean_rows(const Tensor& a);
/// Normalizes each row over its columns, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// Inverted dropout. Identity when rate is 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

/// Mean over valid rows of -log softmax(logits)[target]. Empty `valid` means
/// every row is valid.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                     std::span<const std::uint8_t> valid = {});
/// Mean over valid rows of |pred - target|; `pred` holds one value per row.
Tensor mae(const Tensor& pred, std::span<const double> target, std::span<const std::uint8_t> valid = {});

}  // namespace htseq::ad
