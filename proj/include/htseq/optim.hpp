// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "htseq/tensor.hpp"

namespace htseq {

/// Ordered collection of named trainable tensors.
class ParameterStore {
 public:
  /// Registers `tensor` as a parameter; names must be unique.
  ad::Tensor& add(std::string name, ad::Tensor tensor);
  ad::Tensor& get(const std::string& name);
  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  /// Removes every parameter whose name starts with `prefix`.
  void remove_prefix(const std::string& prefix);

  const std::vector<std::pair<std::string, ad::Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, ad::Tensor>>& items() { return items_; }

  /// Drops all gradient buffers.
  void zero_grad();
  std::size_t total_size() const;

  /// Deep copy of all values, in registration order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<std::pair<std::string, ad::Tensor>> items_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Parameters without a gradient buffer (unused in
/// the step's graph) or with requires_grad off are skipped.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParameterStore& params);
  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t count = 0;
  };
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Binary checkpoint of named tensors:
///   "HTSQCKPT" | u32 version (=1) | u32 count |
///   count x { u32 name_len | name | u32 rank | rank x u64 dim | numel x f64 }
/// All integers and floats little-endian.
void save_checkpoint(const ParameterStore& params, const std::filesystem::path& path);
std::vector<std::pair<std::string, ad::Tensor>> read_checkpoint(const std::filesystem::path& path);
/// Copies values into `params`; names and shapes must match exactly.
void load_checkpoint(ParameterStore& params, const std::filesystem::path& path);

std::string checkpoint_bytes(const ParameterStore& params);
std::vector<std::pair<std::string, ad::Tensor>> parse_checkpoint(const std::string& bytes);

}  // namespace htseq
