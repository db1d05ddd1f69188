// SPDX-License-Identifier: Apache-2.0
#include "kgr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "kgr/error.hpp"

namespace kgr::ad {

GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs, const GradCheckOptions& options) {
  const double eps = options.eps;
  std::vector<bool> saved_flags;
  for (Tensor& t : inputs) {
    saved_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f();
    if (out.numel() != 1) throw DimensionError("grad_check: function must return a scalar");
    Gradients grads = tape.gradients(out);
    for (const Tensor& t : inputs) {
      auto g = grads.of(t);
      analytic.emplace_back(g.begin(), g.end());
      if (analytic.back().empty()) analytic.back().assign(t.numel(), 0.0);
    }
  }

  GradCheckResult result;
  NoGradScope no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      auto at = [&](double offset) {
        values[i] = original + offset;
        return f().item();
      };
      const double numeric = options.five_point
                                 ? (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps)
                                 : (at(eps) - at(-eps)) / (2.0 * eps);
      values[i] = original;

      const double a = analytic[k][i] + options.corrupt;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = rel;
        result.worst_input = k;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) inputs[k].set_requires_grad(saved_flags[k]);
  return result;
}

}  // namespace kgr::ad
