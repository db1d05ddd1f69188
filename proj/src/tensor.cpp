// SPDX-License-Identifier: Apache-2.0
#include "kgr/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "kgr/error.hpp"

namespace kgr::ad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) +
                         " values");
  }
  auto impl = std::make_shared<detail::Storage>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw DimensionError("at(i, j) on tensor of shape " + shape_str(shape()));
  return impl_->values.at(i * impl_->shape[1] + j);
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (g.size() != numel()) throw DimensionError("gradient size does not match tensor " + shape_str(shape()));
  if (!impl_->grad) impl_->grad.emplace(numel(), 0.0);
  auto& dst = *impl_->grad;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Tensor Tensor::detach() const {
  return from(impl_->shape, impl_->values, false);
}

std::span<const double> Gradients::of(const Tensor& t) const {
  auto it = buffers_.find(t.id());
  if (it == buffers_.end()) return {};
  return it->second;
}

void Tape::record(const char* op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn) {
  nodes_.push_back(Node{op, std::move(inputs), output, std::move(fn)});
}

Gradients Tape::gradients(const Tensor& loss) const {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward requires a scalar root, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined tensor")));
  }
  Gradients result;
  auto& buffers = result.buffers_;
  buffers[loss.id()] = std::vector<double>(1, 1.0);

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto found = buffers.find(it->output.id());
    if (found == buffers.end()) continue;
    // Map nodes are stable, so spans into buffers survive later inserts.
    std::span<const double> grad_out = found->second;

    std::vector<std::span<double>> slots;
    slots.reserve(it->inputs.size());
    for (const Tensor& in : it->inputs) {
      if (!in.requires_grad()) {
        slots.emplace_back();
        continue;
      }
      auto& buf = buffers[in.id()];
      if (buf.empty()) buf.assign(in.numel(), 0.0);
      slots.emplace_back(buf);
    }
    it->backward(grad_out, GradSlots(std::move(slots)));
  }
  return result;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw InvalidArgument("backward called without an active tape");
  Gradients grads = tape->gradients(loss);

  std::unordered_set<const void*> produced;
  for (const auto& node : tape->nodes()) produced.insert(node.output.id());

  std::unordered_set<const void*> done;
  for (const auto& node : tape->nodes()) {
    for (const Tensor& in : node.inputs) {
      if (!in.requires_grad() || produced.count(in.id()) || !done.insert(in.id()).second) continue;
      auto g = grads.of(in);
      if (g.empty()) continue;
      Tensor leaf = in;
      leaf.accumulate_grad(g);
    }
  }
}

}  // namespace kgr::ad
