// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and the define-by-run tape that records
// differentiable ops. A tape is bound to the calling thread through
// TapeScope; ops executed while no tape is active record nothing and
// produce tensors that do not require gradients.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kgr::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Storage {
  Shape shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->values.size(); }

  std::span<const double> values() const { return impl_->values; }
  /// Writable access for leaves owned by an optimizer or a test harness.
  /// Must not be used on a tensor that a live tape still references.
  std::span<double> mutable_values() { return impl_->values; }

  double item() const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

  const std::optional<std::vector<double>>& grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.reset(); }
  void accumulate_grad(std::span<const double> g);

  /// Independent copy of the values; never requires grad.
  Tensor detach() const;

  const void* id() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Storage> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::Storage> impl_;
};

/// Per-input gradient buffers handed to an op's backward function. A
/// buffer is empty when that input does not require a gradient.
class GradSlots {
 public:
  explicit GradSlots(std::vector<std::span<double>> slots) : slots_(std::move(slots)) {}
  std::span<double> operator[](std::size_t i) const { return slots_[i]; }
  bool wants(std::size_t i) const { return !slots_[i].empty(); }

 private:
  std::vector<std::span<double>> slots_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, const GradSlots& slots)>;

/// Gradients produced by one backward sweep, keyed by tensor identity.
class Gradients {
 public:
  /// Empty span when the tensor received no gradient.
  std::span<const double> of(const Tensor& t) const;
  bool contains(const Tensor& t) const { return buffers_.count(t.id()) != 0; }

 private:
  friend class Tape;
  std::unordered_map<const void*, std::vector<double>> buffers_;
};

class Tape {
 public:
  struct Node {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void record(const char* op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Reverse sweep from a scalar root. Leaves are left untouched; the
  /// caller decides where the gradients go.
  Gradients gradients(const Tensor& loss) const;

 private:
  std::vector<Node> nodes_;
};

/// Tape active on the calling thread, or nullptr.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording on this thread for the lifetime of the guard.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Backpropagates through the active tape and accumulates into the grad
/// of every leaf that requires one. Repeated calls accumulate.
void backward(const Tensor& loss);

}  // namespace kgr::ad
