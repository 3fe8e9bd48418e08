#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bijou {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl;

// One recorded operation: the inputs it read and how to push the output
// gradient back into them.
struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  void accumulate(std::size_t i, double g);
  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Copies are shallow: two Tensor handles may refer to the same storage.
/// Operations in ops.hpp record a graph when any operand requires grad and
/// grad mode is enabled; `backward()` walks it in reverse topological order.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct writes are reserved for parameter updates (optimizer, EMA, init).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * dim(1) + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // True when this tensor was produced by a recorded operation.
  bool has_node() const;

  /// Populate grad slots of every tensor reachable from this scalar.
  void backward() const;

  // Fresh storage, no graph link, requires_grad off.
  Tensor detach() const;

  const detail::TensorImpl* id() const { return impl_.get(); }

  // Construction path for ops.cpp.
  static Tensor make(Shape shape, std::vector<double> data,
                     std::vector<Tensor> inputs,
                     std::function<void(const detail::TensorImpl& out)> backward);
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording on this thread for its lifetime.
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

// Number of graph nodes created on this thread since start. Used to assert
// that no-grad paths allocate nothing.
std::size_t graph_nodes_created();

}  // namespace bijou
