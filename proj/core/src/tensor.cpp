#include "cardioseq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>
#include <unordered_set>

namespace cardioseq {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string to_string(const Dims3& dims) {
  std::ostringstream os;
  os << '(' << dims.d << ", " << dims.h << ", " << dims.w << ')';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

std::mutex g_fault_mutex;
std::string g_fault_op;

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + to_string(shape));
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

namespace testing {

void set_backward_fault(std::string_view op) {
  std::lock_guard lock(g_fault_mutex);
  g_fault_op = std::string(op);
}

std::string backward_fault() {
  std::lock_guard lock(g_fault_mutex);
  return g_fault_op;
}

}  // namespace testing

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value, bool requires_grad) {
  check_shape(shape);
  std::vector<T> data(cardioseq::numel(shape), value);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  check_shape(shape);
  if (cardioseq::numel(shape) != data.size()) {
    throw ShapeError("buffer of " + std::to_string(data.size()) + " values does not match shape " +
                     to_string(shape));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_->is_leaf()) {
    throw GraphError(std::string("cannot mutate the output of operation '") + node_->op + "'");
  }
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + to_string(shape()));
  return node_->value[0];
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return node_->grad_buffer();
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(shape(), node_->value, false);
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      const std::vector<Tensor<T>>& inputs, detail::BackwardFn<T> backward) {
  if (g_finite_checks) {
    for (auto v : value) {
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  using NodePtr = detail::Node<T>*;
  if (!loss.defined()) throw GraphError("backward called on an undefined tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  auto& root = *loss.node();
  if (root.released) {
    throw GraphError("this graph was already consumed by backward; run a new forward pass");
  }
  if (!root.requires_grad) {
    throw GraphError("loss is detached: no input of its graph requires a gradient");
  }

  // Iterative post-order DFS over interior nodes gives a topological order.
  // `order` owns the nodes so releasing inputs below cannot free them early.
  std::vector<std::shared_ptr<detail::Node<T>>> order;
  std::unordered_set<NodePtr> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node<T>>, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->inputs.size()) {
      auto child = top.first->inputs[top.second++];
      if (child->requires_grad && child->backward && !visited.count(child.get())) {
        visited.insert(child.get());
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    order.push_back(std::move(top.first));
    stack.pop_back();
  }

  const std::string fault = testing::backward_fault();
  root.grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>& node = **it;
    if (!node.backward) continue;  // a leaf loss
    if (!node.grad.empty()) {
      if (!fault.empty() && fault == node.op) {
        for (auto& g : node.grad) g = -g;
      }
      node.backward(node);
    }
    node.backward = nullptr;
    node.inputs.clear();
    node.inputs.shrink_to_fit();
    std::vector<T>().swap(node.grad);
    node.released = true;
  }
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result(const char*, Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   detail::BackwardFn<float>);
template Tensor<double> make_result(const char*, Shape, std::vector<double>,
                                    const std::vector<Tensor<double>>&, detail::BackwardFn<double>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace cardioseq
