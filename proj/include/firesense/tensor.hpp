#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "firesense/error.hpp"

namespace firesense {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// One record of the autodiff graph: the value buffer, its gradient and the rule
/// that pushes the gradient back to the parents.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient has been accumulated
  bool requires_grad = false;
  std::uint64_t seq = 0;  // creation order
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Returns the gradient buffer, allocating zeros on first use.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

std::uint64_t next_node_seq();

/// Whether ops currently record autodiff nodes (thread-local, on by default).
bool grad_enabled();

/// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor handle. Copies share the underlying node (and gradient),
/// like a reference-counted view; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::int64_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::span<const T> values() const { return node_->value; }
  /// Mutable access is meant for leaves (parameters, inputs); mutating an
  /// intermediate invalidates any recorded backward rule that reads it.
  std::span<T> mutable_values() { return node_->value; }
  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient (empty span if none has been accumulated).
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (node_) node_->grad.clear();
  }

  /// Reverse-mode sweep from this scalar. Gradients accumulate into every
  /// reachable tensor that requires grad.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const { return detach(); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(node_->value.begin(), node_->value.end());
    return Tensor<U>(node_->shape, std::move(out));
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<Node<T>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Graph reachable from a root, ordered by creation; backward runs it in reverse.
template <typename T>
struct Graph {
  std::vector<Node<T>*> records;
};

template <typename T>
Graph<T> collect_graph(const Tensor<T>& root);

/// Throws NumericalError naming `what` if any entry is NaN/Inf.
template <typename T>
void check_finite(std::span<const T> data, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace firesense
