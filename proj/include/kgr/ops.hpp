// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kgr/tensor.hpp"

namespace kgr::ad {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds a rank-1 `bias` along the last dimension of `x`.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Multiplies every element of `x` by the single value held in `s`.
Tensor scale_by(const Tensor& x, const Tensor& s);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last dimension, then applies gamma and beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Exact erf-form GELU.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

/// Mean along `axis`; the axis is kept with extent 1.
Tensor mean(const Tensor& x, std::size_t axis);
/// Sum of all elements as a one-element tensor.
Tensor sum(const Tensor& x);

/// Rows of a rank-2 `table`; gradients scatter-add back into the table.
Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids);

/// Replaces entries above the diagonal of a square score matrix with a
/// large negative constant so that a following softmax ignores them.
Tensor mask_future(const Tensor& scores);
inline constexpr double kMaskedScore = -1e30;

enum class Reduction { kMean, kSum };

/// Cross-entropy over rows of `logits` (T x V) whose `mask` entry is set.
/// Ids at masked-off positions are ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, std::span<const std::uint8_t> mask,
                     Reduction reduction = Reduction::kMean);

}  // namespace kgr::ad
