// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>

#include "kgr/tensor.hpp"

namespace kgr::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  double eps = 1e-4;
  /// Five-point stencil (truncation O(eps^4)) instead of the two-point
  /// one. Lets a larger eps keep roundoff small for tiny gradients.
  bool five_point = false;
  /// Added to every analytic gradient before comparison; shows the check
  /// is sensitive.
  double corrupt = 0.0;
};

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences for every coordinate of every tensor in `inputs`. The
/// inputs must be leaves that `f` reads; their values are perturbed in
/// place and restored. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace kgr::ad
