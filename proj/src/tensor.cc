#include "rilm/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "rilm/error.hpp"

namespace rilm {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

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

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

}  // namespace detail

using detail::TensorImpl;

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_numel(shape))
    throw Error("shape: " + std::to_string(values.size()) +
                " values do not fill shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           const std::vector<Tensor>& inputs, BackwardFn backward) {
  Tensor out = from(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.impl_->requires_grad = true;
  for (const auto& t : inputs)
    if (t.requires_grad()) out.impl_->inputs.push_back(t.impl_);
  out.impl_->backward = std::move(backward);
  return out;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size())
    throw Error("shape: axis " + std::to_string(axis) + " out of range for " +
                shape_str(impl_->shape));
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (impl_->data.size() != 1)
    throw Error("shape: item() on tensor of shape " + shape_str(impl_->shape));
  return impl_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return impl_->data[i * impl_->shape.at(1) + j];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.clear(); }

void Tensor::accumulate_grad(std::span<const double> g) const {
  if (!impl_->requires_grad) return;
  auto& dst = impl_->grad;
  if (dst.empty()) dst.assign(impl_->data.size(), 0.0);
  if (g.size() != dst.size())
    throw Error("shape: gradient of size " + std::to_string(g.size()) +
                " for tensor " + shape_str(impl_->shape));
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Tensor Tensor::clone(bool requires_grad) const {
  return from(impl_->shape, impl_->data, requires_grad);
}

void Tensor::backward() const {
  if (impl_->data.size() != 1)
    throw Error("autograd: backward() needs a scalar loss, got " +
                shape_str(impl_->shape));
  if (impl_->consumed)
    throw Error("autograd: backward() called twice on the same graph");
  if (!impl_->requires_grad)
    throw Error("autograd: loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack{{impl_.get(), 0}};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorImpl* child = node->inputs[next++].get();
      if (seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (!node->backward) continue;  // leaf
    if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
    node->backward(node->data, node->grad);
  }
  // Release the tape. Interior gradients are dropped; leaves keep theirs.
  for (TensorImpl* node : order) {
    if (!node->backward) continue;
    node->backward = nullptr;
    node->inputs.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
  impl_->consumed = true;
}

}  // namespace rilm
