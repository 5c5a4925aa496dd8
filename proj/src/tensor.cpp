#include "mmp/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mmp/errors.hpp"

namespace mmp {

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape));
  }
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  std::vector<double> values;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return from({rows.size(), cols}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return from({values.size()}, std::vector<double>(values), requires_grad);
}

Tensor Tensor::eye(std::size_t n, bool requires_grad) {
  Tensor t = zeros({n, n}, requires_grad);
  for (std::size_t i = 0; i < n; ++i) t.impl_->data[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::vector<Tensor> inputs, const char* op,
                           BackwardFn backward) {
  if (!all_finite(values)) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  Tensor out = from(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.impl_->requires_grad = true;
  out.impl_->node = std::make_shared<detail::Node>(
      detail::Node{op, std::move(inputs), std::move(backward)});
  return out;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on non-matrix " + shape_string(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on non-matrix " + shape_string(shape()));
  return impl_->shape[1];
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }
const std::vector<double>& Tensor::values() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor " + shape_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t i) const { return impl_->data.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data.at(r * cols() + c);
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (impl_->node) throw UsageError("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

const char* Tensor::op() const { return impl_->node ? impl_->node->op : "leaf"; }

Tensor Tensor::clone() const {
  Tensor t = from(impl_->shape, impl_->data, impl_->requires_grad);
  t.impl_->grad = impl_->grad;
  return t;
}

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data); }

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw DimensionError("reshape " + shape_string(shape()) + " -> " +
                         shape_string(new_shape));
  }
  return make_result(std::move(new_shape), impl_->data, {*this}, "reshape",
                     [](std::span<const double> g, std::span<Tensor> in) {
                       if (!in[0].requires_grad()) return;
                       auto dst = in[0].grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                     });
}

void Tensor::backward() const {
  if (!impl_) throw UsageError("backward on undefined tensor");
  if (numel() != 1 || rank() != 0) {
    throw UsageError("backward requires a scalar loss, got " + shape_string(shape()));
  }
  if (!std::isfinite(impl_->data[0])) throw NumericError("backward on non-finite loss");
  if (!impl_->requires_grad) return;

  // Post-order DFS yields a topological order (inputs before consumers).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->node && next < node->node->inputs.size()) {
      detail::TensorImpl* child = node->node->inputs[next++].impl_.get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (detail::TensorImpl* t : order) {
    if (t->node) t->grad.assign(t->data.size(), 0.0);
  }
  if (impl_->grad.empty()) impl_->grad.assign(1, 0.0);
  impl_->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    if (!t->node) continue;
    if (!all_finite(t->grad)) {
      throw NumericError(std::string("non-finite gradient entering backward of ") +
                         t->node->op);
    }
    t->node->backward(t->grad, t->node->inputs);
  }
  for (detail::TensorImpl* t : order) {
    if (!t->node && !all_finite(t->grad)) {
      throw NumericError("non-finite gradient accumulated into a leaf tensor " +
                         shape_string(t->shape));
    }
  }
}

}  // namespace mmp
