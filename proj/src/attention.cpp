// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#include "htseq/attention.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "htseq/error.hpp"

namespace htseq {

std::size_t AttentionMask::row_count(std::size_t row) const {
  return static_cast<std::size_t>(
      std::count(allow_.begin() + static_cast<std::ptrdiff_t>(row * size_),
                 allow_.begin() + static_cast<std::ptrdiff_t>((row + 1) * size_), std::uint8_t{1}));
}

std::string AttentionMask::to_string() const {
  std::string out;
  out.reserve(size_ * (size_ + 1));
  for (std::size_t i = 0; i < size_; ++i) {
    for (std::size_t j = 0; j < size_; ++j) out += at(i, j) ? '1' : '0';
    out += '\n';
  }
  return out;
}

namespace ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using HeadView = Eigen::Map<const RowMajor, 0, Eigen::OuterStride<>>;
using HeadSlot = Eigen::Map<RowMajor, 0, Eigen::OuterStride<>>;

// Columns [h * dh, (h + 1) * dh) of rows [begin, begin + n) of a (T, d) buffer.
HeadView head_view(const double* base, std::size_t begin, std::size_t n, std::size_t d, std::size_t h,
                   std::size_t dh) {
  return HeadView(base + begin * d + h * dh, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dh),
                  Eigen::OuterStride<>(static_cast<Eigen::Index>(d)));
}

HeadSlot head_slot(double* base, std::size_t begin, std::size_t n, std::size_t d, std::size_t h, std::size_t dh) {
  return HeadSlot(base + begin * d + h * dh, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dh),
                  Eigen::OuterStride<>(static_cast<Eigen::Index>(d)));
}

}  // namespace

void AttentionPattern::append_block(const AttentionMask& mask, std::size_t length, std::span<const std::uint8_t> pad) {
  if (length > mask.size()) throw ShapeError("attention block longer than its mask");
  const std::size_t offset = tokens;
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j < length; ++j)
      if (mask.at(i, j)) cols.push_back(static_cast<std::uint32_t>(offset + j));
    row_ptr.push_back(cols.size());
    pad_rows.push_back(!pad.empty() && pad[i] ? 1 : 0);
  }
  tokens += length;
  if (length > 0) blocks.push_back(tokens);
}

AttentionPattern AttentionPattern::from_mask(const AttentionMask& mask, std::span<const std::uint8_t> pad) {
  AttentionPattern p;
  p.append_block(mask, mask.size(), pad);
  return p;
}

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionPattern& pattern,
                        std::size_t heads) {
  return masked_attention(q, k, v, std::make_shared<const AttentionPattern>(pattern), heads);
}

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::shared_ptr<const AttentionPattern> shared, std::size_t heads) {
  const AttentionPattern& pattern = *shared;
  const auto t = q.rows(), d = q.cols();
  if (k.rows() != t || v.rows() != t || k.cols() != d || v.cols() != d)
    throw ShapeError("attention: q, k, v must share shape (T, d)");
  if (pattern.tokens != t) throw ShapeError("attention: pattern covers " + std::to_string(pattern.tokens) +
                                            " tokens, inputs have " + std::to_string(t));
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: d not divisible by head count");
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t i = 0; i < t; ++i)
    if (pattern.row_ptr[i] == pattern.row_ptr[i + 1] && !pattern.pad_rows[i])
      throw ValidationError("attention: row " + std::to_string(i) + " has no allowed positions and is not pad");

  // probs holds, per block and head, the dense (n, n) weight matrix.
  const auto& blocks = pattern.blocks;
  std::vector<std::size_t> prob_offset{0};
  // Blocks whose allowed columns never pass the diagonal only need the
  // lower triangle of every (n, n) product.
  std::vector<std::uint8_t> lower;
  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
    const auto n = blocks[b + 1] - blocks[b];
    prob_offset.push_back(prob_offset.back() + heads * n * n);
    bool tri = true;
    for (auto row = blocks[b]; row < blocks[b + 1] && tri; ++row)
      if (pattern.row_ptr[row] != pattern.row_ptr[row + 1]) tri = pattern.cols[pattern.row_ptr[row + 1] - 1] <= row;
    lower.push_back(tri);
  }
  auto probs = std::make_shared<std::vector<double>>(prob_offset.back(), 0.0);
  std::vector<double> out(t * d, 0.0);
  RowMajor scores;
  Eigen::ArrayXd scratch;
  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
    const auto begin = blocks[b], n = blocks[b + 1] - begin;
    const auto rows = static_cast<Eigen::Index>(n);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto qh = head_view(q.data().data(), begin, n, d, h, dh);
      const auto kh = head_view(k.data().data(), begin, n, d, h, dh);
      if (lower[b]) {
        scores.resize(rows, rows);
        scores.triangularView<Eigen::Lower>() = qh * kh.transpose();
      } else {
        scores.noalias() = qh * kh.transpose();
      }
      double* p = probs->data() + prob_offset[b] + h * n * n;
      scratch.resize(rows);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = begin + i;
        const auto first = pattern.row_ptr[row], last = pattern.row_ptr[row + 1];
        if (first == last) continue;
        // The scratch row starts on an aligned Eigen buffer, so the vectorized
        // exp takes the same code path on every run.
        const auto width = lower[b] ? static_cast<Eigen::Index>(i + 1) : rows;
        auto row_scores = scratch.head(width);
        row_scores = scores.row(static_cast<Eigen::Index>(i)).head(width).array() * scale;
        double mx = -INFINITY;
        for (auto e = first; e < last; ++e) mx = std::max(mx, scratch[pattern.cols[e] - begin]);
        row_scores = (row_scores - mx).exp();
        double z = 0.0;
        for (auto e = first; e < last; ++e) z += scratch[pattern.cols[e] - begin];
        const double inv_z = 1.0 / z;
        double* pi = p + i * n;
        for (auto e = first; e < last; ++e) {
          const auto j = pattern.cols[e] - begin;
          pi[j] = scratch[j] * inv_z;
        }
      }
      const Eigen::Map<const RowMajor> pm(p, rows, rows);
      const auto vh = head_view(v.data().data(), begin, n, d, h, dh);
      auto slot = head_slot(out.data(), begin, n, d, h, dh);
      if (lower[b])
        slot.noalias() = pm.triangularView<Eigen::Lower>() * vh;
      else
        slot.noalias() = pm * vh;
    }
  }

  return make_result(q.shape(), std::move(out), {q, k, v},
                     [pat = std::move(shared), probs, prob_offset = std::move(prob_offset), lower = std::move(lower),
                      d, heads, dh, scale](Node& self) {
    auto gq = grad_of(self.parents[0]);
    auto gk = grad_of(self.parents[1]);
    auto gv = grad_of(self.parents[2]);
    const double* qv = self.parents[0]->value.data();
    const double* kv = self.parents[1]->value.data();
    const double* vv = self.parents[2]->value.data();
    const double* go = self.grad.data();
    const auto& blocks = pat->blocks;
    RowMajor dp;
    for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
      const auto begin = blocks[b], n = blocks[b + 1] - begin;
      const auto rows = static_cast<Eigen::Index>(n);
      const bool tri = lower[b];
      for (std::size_t h = 0; h < heads; ++h) {
        const Eigen::Map<const RowMajor> pm(probs->data() + prob_offset[b] + h * n * n, rows, rows);
        const auto dout = head_view(go, begin, n, d, h, dh);
        if (!gv.empty()) {
          auto slot = head_slot(gv.data(), begin, n, d, h, dh);
          if (tri)
            slot.noalias() += pm.triangularView<Eigen::Lower>().transpose() * dout;
          else
            slot.noalias() += pm.transpose() * dout;
        }
        if (gq.empty() && gk.empty()) continue;
        const auto vh = head_view(vv, begin, n, d, h, dh);
        if (tri) {
          dp.resize(rows, rows);
          dp.triangularView<Eigen::Lower>() = dout * vh.transpose();
        } else {
          dp.noalias() = dout * vh.transpose();
        }
        // Softmax backward: ds_ij = p_ij (dp_ij - sum_k p_ik dp_ik), then the score scale.
        for (Eigen::Index i = 0; i < rows; ++i) {
          const Eigen::Index width = tri ? i + 1 : rows;
          double dot = 0.0;
          for (Eigen::Index j = 0; j < width; ++j) dot += pm(i, j) * dp(i, j);
          dp.row(i).head(width).array() = pm.row(i).head(width).array() * (dp.row(i).head(width).array() - dot) * scale;
        }
        if (!gq.empty()) {
          auto slot = head_slot(gq.data(), begin, n, d, h, dh);
          const auto kh = head_view(kv, begin, n, d, h, dh);
          if (tri)
            slot.noalias() += dp.triangularView<Eigen::Lower>() * kh;
          else
            slot.noalias() += dp * kh;
        }
        if (!gk.empty()) {
          auto slot = head_slot(gk.data(), begin, n, d, h, dh);
          const auto qh = head_view(qv, begin, n, d, h, dh);
          if (tri)
            slot.noalias() += dp.triangularView<Eigen::Lower>().transpose() * qh;
          else
            slot.noalias() += dp.transpose() * qh;
        }
      }
    }
  });
}

Tensor masked_softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask,
                                std::span<const std::uint8_t> pad_rows) {
  if (mask.size() != q.rows()) throw ShapeError("attention: mask size does not match sequence length");
  return masked_attention(q, k, v, AttentionPattern::from_mask(mask, pad_rows), 1);
}

}  // namespace ad
}  // namespace htseq
