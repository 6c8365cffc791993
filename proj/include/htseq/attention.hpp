// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "htseq/tensor.hpp"

namespace htseq {

/// Square boolean allow-matrix: row = attending token, column = attended token.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(std::size_t size) : size_(size), allow_(size * size, 0) {}

  std::size_t size() const { return size_; }
  bool at(std::size_t row, std::size_t col) const { return allow_[row * size_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool value) { allow_[row * size_ + col] = value ? 1 : 0; }
  std::size_t row_count(std::size_t row) const;

  /// 0/1 grid, one row per line.
  std::string to_string() const;

  bool operator==(const AttentionMask& other) const = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint8_t> allow_;
};

namespace ad {

/// Compressed-row attention pattern over a packed token axis. Several masks
/// can be laid out block-diagonally, one block per batch row.
struct AttentionPattern {
  std::size_t tokens = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> cols;
  std::vector<std::uint8_t> pad_rows;  // rows allowed to have no columns
  std::vector<std::size_t> blocks{0};  // block boundaries; no entry crosses one

  /// Appends `mask` restricted to its leading `length` rows/columns at `offset`.
  void append_block(const AttentionMask& mask, std::size_t length, std::span<const std::uint8_t> pad = {});
  static AttentionPattern from_mask(const AttentionMask& mask, std::span<const std::uint8_t> pad = {});
};

/// Multi-head scaled dot-product attention restricted to the pattern.
///
/// Each block is computed densely and masked before normalization.
/// q, k, v are (T, d) with d divisible by `heads`. Disallowed positions are
/// excluded before normalization, so their weights are exactly zero. Rows with
/// no allowed positions produce zeros and must be flagged as pad.
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionPattern& pattern,
                        std::size_t heads);
/// Shares the pattern with the backward pass instead of copying it.
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::shared_ptr<const AttentionPattern> pattern, std::size_t heads);

/// Single-head form over one mask.
Tensor masked_softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask,
                                std::span<const std::uint8_t> pad_rows = {});

}  // namespace ad
}  // namespace htseq
