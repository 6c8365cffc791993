// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "htseq/tensor.hpp"

namespace htseq::ad {

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `op` against central differences.
///
/// Non-scalar outputs are reduced with fixed pseudo-random weights so every
/// output element is exercised. The error per element is
/// |analytic - numeric| / max(1, |analytic|, |numeric|). Failures are
/// reported, never thrown.
GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& op, std::vector<Tensor> inputs,
                           double tol = 1e-4, double step = 1e-4);

}  // namespace htseq::ad
