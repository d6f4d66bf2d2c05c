#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rilm {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor;

// Backward rule of a recorded operation: receives the operation's output
// values and the gradient flowing into them, and accumulates into inputs.
using BackwardFn =
    std::function<void(std::span<const double> out, std::span<const double> grad)>;

namespace detail {
struct TensorImpl;
}

// Dense row-major tensor of doubles with reverse-mode autodiff.
//
// Tensor is a cheap shared handle. Operations that take any input with
// requires_grad() produce a result that remembers its inputs and backward
// rule; the recorded graph is the tape. backward() consumes it: a second
// backward() over the same loss is an error, and the intermediate nodes are
// released afterwards. Leaf gradients accumulate until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  // Builds the result of a custom operation. The node is recorded only when
  // gradients are enabled and at least one input requires them.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            const std::vector<Tensor>& inputs, BackwardFn backward);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // In-place access for optimizer updates and initialization only; never use
  // on tensors that are part of a live graph.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  // Adds g into this tensor's gradient (allocating it on first use).
  void accumulate_grad(std::span<const double> g) const;

  void backward() const;

  // Deep copy of values, detached from any graph.
  Tensor clone(bool requires_grad = false) const;

  bool same_node(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace rilm
