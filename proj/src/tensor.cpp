#include "firesense/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace firesense {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::uint64_t next_node_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
void check_finite(std::span<const T> data, const char* what) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      std::ostringstream os;
      os << "non-finite value " << data[i] << " in " << what << " at flat index " << i;
      throw NumericalError(os.str());
    }
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) {
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + to_string(shape));
  }
  node_ = std::make_shared<Node<T>>();
  node_->value.assign(static_cast<std::size_t>(firesense::numel(shape)), fill);
  node_->shape = std::move(shape);
  node_->seq = next_node_seq();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  if (firesense::numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->seq = next_node_seq();
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->value.size() != 1) {
    throw UsageError("item() on tensor of shape " + to_string(node_->shape));
  }
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  if (index.size() != node_->shape.size()) throw DimensionError("index rank mismatch");
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    const auto d = node_->shape[axis++];
    if (i < 0 || i >= d) throw DimensionError("index out of range");
    flat = flat * d + i;
  }
  return node_->value[static_cast<std::size_t>(flat)];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value);
}

template <typename T>
Graph<T> collect_graph(const Tensor<T>& root) {
  Graph<T> g;
  if (!root.defined()) return g;
  std::unordered_set<const Node<T>*> seen;
  std::vector<Node<T>*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    g.records.push_back(n);
    for (const auto& p : n->parents) {
      if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(g.records.begin(), g.records.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->seq < b->seq; });
  return g;
}

template <typename T>
void Tensor<T>::backward() const {
  if (!node_) throw UsageError("backward() on undefined tensor");
  if (node_->value.size() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " + to_string(node_->shape));
  }
  if (!node_->requires_grad) throw UsageError("backward() on a tensor that does not require grad");
  Graph<T> g = collect_graph(*this);
  node_->grad_buffer()[0] += T(1);
  for (auto it = g.records.rbegin(); it != g.records.rend(); ++it) {
    Node<T>& n = **it;
    if (n.grad.empty()) continue;
    check_finite<T>(n.grad, n.op);
    if (n.backward) n.backward(n);
  }
}

template void check_finite<float>(std::span<const float>, const char*);
template void check_finite<double>(std::span<const double>, const char*);
template Graph<float> collect_graph(const Tensor<float>&);
template Graph<double> collect_graph(const Tensor<double>&);
template class Tensor<float>;
template class Tensor<double>;

}  // namespace firesense
