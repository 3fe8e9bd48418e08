#include "bijou/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "bijou/errors.hpp"

namespace bijou {

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::size_t g_nodes_created = 0;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void TensorImpl::accumulate(std::size_t i, double g) { grad_buffer()[i] += g; }

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }
std::size_t graph_nodes_created() { return g_nodes_created; }

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::make(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                    std::function<void(const detail::TensorImpl& out)> backward) {
  Tensor out = from(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.impl_);
  node->backward = std::move(backward);
  out.impl_->node = std::move(node);
  out.impl_->requires_grad = true;
  ++g_nodes_created;
  return out;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() needs a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ContractError("use of undefined tensor");
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->grad_buffer();
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool Tensor::has_node() const { return impl_ && impl_->node != nullptr; }

Tensor Tensor::detach() const { return from(shape(), impl_->data); }

void Tensor::backward() const {
  if (!impl_) throw ContractError("backward() on undefined tensor");
  if (impl_->data.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(impl_->shape));
  }
  if (!std::isfinite(impl_->data[0])) throw NumericError("backward() on non-finite loss");
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of graph nodes.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<const detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->node && next < t->node->inputs.size()) {
      auto* child = t->node->inputs[next++].get();
      if (child->requires_grad && child->node && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  impl_->accumulate(0, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* t = *it;
    if (t->grad.empty()) continue;
    t->node->backward(*t);
  }
}

}  // namespace bijou
