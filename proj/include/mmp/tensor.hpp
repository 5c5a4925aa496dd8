#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first written
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves
};

}  // namespace detail

/// Gradient callback of an operation: receives the gradient of the op output
/// and the op inputs; adds into inputs[i].grad_buffer() for every input that
/// requires grad.
using BackwardFn =
    std::function<void(std::span<const double> out_grad, std::span<Tensor> inputs)>;

/// Dense row-major tensor of doubles with reverse-mode autodiff.
///
/// Tensor is a handle: copies share storage, like the graph nodes they feed.
/// Use clone() for an independent copy. Shapes have positive extents; a
/// scalar has shape {}.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values,
                       bool requires_grad = false);
  static Tensor eye(std::size_t n, bool requires_grad = false);

  /// Builds the output of a differentiable operation. When gradient recording
  /// is on and any input requires grad, the result records `backward`.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs, const char* op,
                            BackwardFn backward);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  std::span<const double> data() const;
  std::span<double> mutable_data();
  const std::vector<double>& values() const;
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  /// Gradient storage, allocated as zeros on first access.
  std::span<double> grad_buffer();
  void zero_grad();

  /// Name of the op that produced this tensor ("leaf" for leaves).
  const char* op() const;

  Tensor clone() const;   // deep copy of values and grad, no graph
  Tensor detach() const;  // shares nothing, values only
  Tensor reshape(Shape shape) const;

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls; intermediate gradients are recomputed each call.
  void backward() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  friend struct detail::Node;

  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {
struct Node {
  const char* op;
  std::vector<Tensor> inputs;
  BackwardFn backward;
};
}  // namespace detail

/// Scoped switch that stops graph recording (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

}  // namespace mmp
