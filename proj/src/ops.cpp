// SPDX-License-Identifier: Apache-2.0
#include "kgr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "kgr/error.hpp"

namespace kgr::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

bool any_requires_grad(const std::vector<Tensor>& inputs) {
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

/// Creates the op output and, when recording, registers the backward
/// closure built by `make_backward(output)`.
template <typename MakeBackward>
Tensor emit(const char* op, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
            MakeBackward&& make_backward) {
  Tape* tape = active_tape();
  const bool record = tape != nullptr && any_requires_grad(inputs);
  Tensor out = Tensor::from(std::move(shape), std::move(values), record);
  if (record) tape->record(op, std::move(inputs), out, make_backward(out));
  return out;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

double gelu_value(double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  return emit("matmul", {a, b}, {a.dim(0), b.dim(1)}, std::move(out), [a, b, m, k, n](const Tensor&) {
    return [a, b, m, k, n](std::span<const double> g, const GradSlots& slots) {
      ConstMap gm(g.data(), m, n);
      if (slots.wants(0)) MutMap(slots[0].data(), m, k).noalias() += gm * ConstMap(b.values().data(), k, n).transpose();
      if (slots.wants(1)) MutMap(slots[1].data(), k, n).noalias() += ConstMap(a.values().data(), m, k).transpose() * gm;
    };
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return emit("transpose", {a}, {c, r}, std::move(out), [r, c](const Tensor&) {
    return [r, c](std::span<const double> g, const GradSlots& slots) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) slots[0][i * c + j] += g[j * r + i];
    };
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return emit("add", {a, b}, a.shape(), std::move(out), [](const Tensor&) {
    return [](std::span<const double> g, const GradSlots& slots) {
      for (std::size_t s = 0; s < 2; ++s)
        if (slots.wants(s))
          for (std::size_t i = 0; i < g.size(); ++i) slots[s][i] += g[i];
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return emit("sub", {a, b}, a.shape(), std::move(out), [](const Tensor&) {
    return [](std::span<const double> g, const GradSlots& slots) {
      if (slots.wants(0))
        for (std::size_t i = 0; i < g.size(); ++i) slots[0][i] += g[i];
      if (slots.wants(1))
        for (std::size_t i = 0; i < g.size(); ++i) slots[1][i] -= g[i];
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return emit("mul", {a, b}, a.shape(), std::move(out), [a, b](const Tensor&) {
    return [a, b](std::span<const double> g, const GradSlots& slots) {
      auto av = a.values();
      auto bv = b.values();
      if (slots.wants(0))
        for (std::size_t i = 0; i < g.size(); ++i) slots[0][i] += g[i] * bv[i];
      if (slots.wants(1))
        for (std::size_t i = 0; i < g.size(); ++i) slots[1][i] += g[i] * av[i];
    };
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
  return emit("scale", {a}, a.shape(), std::move(out), [factor](const Tensor&) {
    return [factor](std::span<const double> g, const GradSlots& slots) {
      for (std::size_t i = 0; i < g.size(); ++i) slots[0][i] += g[i] * factor;
    };
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match last dim of " +
                         shape_str(x.shape()));
  }
  const std::size_t n = bias.dim(0);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] + bias.values()[i % n];
  return emit("add_bias", {x, bias}, x.shape(), std::move(out), [n](const Tensor&) {
    return [n](std::span<const double> g, const GradSlots& slots) {
      if (slots.wants(0))
        for (std::size_t i = 0; i < g.size(); ++i) slots[0][i] += g[i];
      if (slots.wants(1))
        for (std::size_t i = 0; i < g.size(); ++i) slots[1][i % n] += g[i];
    };
  });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: factor must hold one value, got " + shape_str(s.shape()));
  const double f = s.values()[0];
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * f;
  return emit("scale_by", {x, s}, x.shape(), std::move(out), [x, f](const Tensor&) {
    return [x, f](std::span<const double> g, const GradSlots& slots) {
      auto xv = x.values();
      if (slots.wants(0))
        for (std::size_t i = 0; i < g.size(); ++i) slots[0][i] += g[i] * f;
      if (slots.wants(1)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
        slots[1][0] += acc;
      }
    };
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis("softmax", x.shape(), axis);
  auto xv = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = xv[base];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(xv[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= total;
    }
  }
  return emit("softmax", {x}, x.shape(), std::move(out), [s](const Tensor& y) {
    return [s, y](std::span<const double> g, const GradSlots& slots) {
      auto yv = y.values();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.extent * s.inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < s.extent; ++k) dot += g[base + k * s.inner] * yv[base + k * s.inner];
          for (std::size_t k = 0; k < s.extent; ++k) {
            const std::size_t idx = base + k * s.inner;
            slots[0][idx] += yv[idx] * (g[idx] - dot);
          }
        }
      }
    };
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  if (n == 0) throw DimensionError("layer_norm: zero-length normalization axis");
  if (!(eps > 0.0)) throw InvalidArgument("layer_norm: eps must be positive");
  if (gamma.rank() != 1 || gamma.dim(0) != n || beta.rank() != 1 || beta.dim(0) != n) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " do not match last dim of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * rstd[r];
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return emit("layer_norm", {x, gamma, beta}, x.shape(), std::move(out),
              [gamma, n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](const Tensor&) mutable {
                return [gamma, n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](std::span<const double> g,
                                                                                        const GradSlots& slots) {
                  auto gv = gamma.values();
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * n;
                    const double* hr = xhat.data() + r * n;
                    if (slots.wants(1))
                      for (std::size_t j = 0; j < n; ++j) slots[1][j] += gr[j] * hr[j];
                    if (slots.wants(2))
                      for (std::size_t j = 0; j < n; ++j) slots[2][j] += gr[j];
                    if (slots.wants(0)) {
                      double mean_d = 0.0, mean_dh = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double d = gr[j] * gv[j];
                        mean_d += d;
                        mean_dh += d * hr[j];
                      }
                      mean_d /= static_cast<double>(n);
                      mean_dh /= static_cast<double>(n);
                      for (std::size_t j = 0; j < n; ++j) {
                        const double d = gr[j] * gv[j];
                        slots[0][r * n + j] += rstd[r] * (d - mean_d - hr[j] * mean_dh);
                      }
                    }
                  }
                };
              });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(xv[i]);
  return emit("gelu", {x}, x.shape(), std::move(out), [x](const Tensor&) {
    return [x](std::span<const double> g, const GradSlots& slots) {
      auto xv = x.values();
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xv[i];
        const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        slots[0][i] += g[i] * (cdf + v * pdf);
      }
    };
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    // Branch keeps exp() from overflowing for large |v|.
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return emit("sigmoid", {x}, x.shape(), std::move(out), [](const Tensor& y) {
    return [y](std::span<const double> g, const GradSlots& slots) {
      auto yv = y.values();
      for (std::size_t i = 0; i < g.size(); ++i) slots[0][i] += g[i] * yv[i] * (1.0 - yv[i]);
    };
  });
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  const Tensor parts[] = {a, b};
  return concat(parts, axis);
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  split_axis("concat", first, axis);
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t d = 0; ok && d < first.size(); ++d)
      if (d != axis && p.dim(d) != first[d]) ok = false;
    if (!ok) {
      throw DimensionError("concat: extent mismatch " + shape_str(first) + " vs " + shape_str(p.shape()) +
                           " along axis " + std::to_string(axis));
    }
    out_shape[axis] += p.dim(axis);
  }
  const AxisSplit s = split_axis("concat", out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * s.inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pv.data() + o * chunk, chunk, out.data() + o * s.extent * s.inner + offset * s.inner);
    offset += p.dim(axis);
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::vector<std::size_t> extents;
  for (const Tensor& p : parts) extents.push_back(p.dim(axis));
  return emit("concat", std::move(inputs), out_shape, std::move(out), [s, offsets, extents](const Tensor&) {
    return [s, offsets, extents](std::span<const double> g, const GradSlots& slots) {
      for (std::size_t p = 0; p < extents.size(); ++p) {
        if (!slots.wants(p)) continue;
        const std::size_t chunk = extents[p] * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = g.data() + o * s.extent * s.inner + offsets[p] * s.inner;
          double* dst = slots[p].data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
    };
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis("slice", x.shape(), axis);
  if (begin > end || end > s.extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " +
                         shape_str(x.shape()) + " axis " + std::to_string(axis));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  std::vector<double> out(s.outer * chunk);
  auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.data() + o * s.extent * s.inner + begin * s.inner, chunk, out.data() + o * chunk);
  return emit("slice", {x}, out_shape, std::move(out), [s, begin, chunk](const Tensor&) {
    return [s, begin, chunk](std::span<const double> g, const GradSlots& slots) {
      for (std::size_t o = 0; o < s.outer; ++o) {
        double* dst = slots[0].data() + o * s.extent * s.inner + begin * s.inner;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[o * chunk + i];
      }
    };
  });
}

Tensor mean(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis("mean", x.shape(), axis);
  if (s.extent == 0) throw DimensionError("mean: empty axis");
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.extent; ++k)
      for (std::size_t in = 0; in < s.inner; ++in) out[o * s.inner + in] += xv[(o * s.extent + k) * s.inner + in];
  const double inv = 1.0 / static_cast<double>(s.extent);
  for (double& v : out) v *= inv;
  return emit("mean", {x}, out_shape, std::move(out), [s, inv](const Tensor&) {
    return [s, inv](std::span<const double> g, const GradSlots& slots) {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.extent; ++k)
          for (std::size_t in = 0; in < s.inner; ++in)
            slots[0][(o * s.extent + k) * s.inner + in] += g[o * s.inner + in] * inv;
    };
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return emit("sum", {x}, {1}, {total}, [](const Tensor&) {
    return [](std::span<const double> g, const GradSlots& slots) {
      for (double& v : slots[0]) v += g[0];
    };
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids) {
  require_rank("gather_rows", table, 2);
  const std::size_t rows = table.dim(0), width = table.dim(1);
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  for (std::int64_t id : idx) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw InvalidArgument("gather_rows: id " + std::to_string(id) + " outside table of " + std::to_string(rows) +
                            " rows");
    }
  }
  std::vector<double> out(idx.size() * width);
  auto tv = table.values();
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[r]) * width, width, out.data() + r * width);
  return emit("gather_rows", {table}, {idx.size(), width}, std::move(out), [idx, width](const Tensor&) {
    return [idx, width](std::span<const double> g, const GradSlots& slots) {
      for (std::size_t r = 0; r < idx.size(); ++r) {
        double* dst = slots[0].data() + static_cast<std::size_t>(idx[r]) * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += g[r * width + j];
      }
    };
  });
}

Tensor mask_future(const Tensor& scores) {
  require_rank("mask_future", scores, 2);
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  std::vector<double> out(scores.values().begin(), scores.values().end());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = i + 1; j < cols; ++j) out[i * cols + j] = kMaskedScore;
  return emit("mask_future", {scores}, scores.shape(), std::move(out), [cols](const Tensor&) {
    return [cols](std::span<const double> g, const GradSlots& slots) {
      for (std::size_t idx = 0; idx < g.size(); ++idx)
        if (idx % cols <= idx / cols) slots[0][idx] += g[idx];
    };
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, std::span<const std::uint8_t> mask,
                     Reduction reduction) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows || mask.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets / " +
                         std::to_string(mask.size()) + " mask entries for logits " + shape_str(logits.shape()));
  }
  std::size_t count = 0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (!mask[t]) continue;
    ++count;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vocab) {
      throw InvalidArgument("cross_entropy: target id " + std::to_string(targets[t]) + " at position " +
                            std::to_string(t) + " outside vocabulary of " + std::to_string(vocab));
    }
  }
  if (count == 0) throw InvalidArgument("cross_entropy: every position is masked");

  auto lv = logits.values();
  std::vector<double> probs(rows * vocab, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (!mask[t]) continue;
    const double* row = lv.data() + t * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(row[v] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[targets[t]];
    for (std::size_t v = 0; v < vocab; ++v) probs[t * vocab + v] = std::exp(row[v] - log_z);
  }
  const double norm = reduction == Reduction::kMean ? 1.0 / static_cast<double>(count) : 1.0;
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  return emit("cross_entropy", {logits}, {1}, {total * norm},
              [vocab, norm, probs = std::move(probs), tgt = std::move(tgt), msk = std::move(msk)](const Tensor&) mutable {
                return [vocab, norm, probs = std::move(probs), tgt = std::move(tgt), msk = std::move(msk)](
                           std::span<const double> g, const GradSlots& slots) {
                  const double scale_factor = g[0] * norm;
                  for (std::size_t t = 0; t < msk.size(); ++t) {
                    if (!msk[t]) continue;
                    for (std::size_t v = 0; v < vocab; ++v) slots[0][t * vocab + v] += scale_factor * probs[t * vocab + v];
                    slots[0][t * vocab + static_cast<std::size_t>(tgt[t])] -= scale_factor;
                  }
                };
              });
}

}  // namespace kgr::ad
