#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cardioseq/error.hpp"

namespace cardioseq {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Per-axis integer triple in (depth, height, width) order.
struct Dims3 {
  std::size_t d = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  constexpr std::size_t product() const { return d * h * w; }
  friend constexpr bool operator==(const Dims3&, const Dims3&) = default;
};

std::string to_string(const Dims3& dims);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(Node<T>& self)>;

/// One vertex of the differentiation tape. Leaves have no backward rule;
/// interior nodes own references to their inputs until backward releases them.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool released = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn<T> backward;

  bool is_leaf() const { return !backward && inputs.empty() && !released; }

  /// Gradient buffer, zero-allocated on first use.
  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense N-dimensional value grid with reverse-mode differentiation.
///
/// A Tensor is a shared handle: copies alias the same node. Values are
/// immutable after an operation creates them; only leaves (parameters and
/// inputs) may be mutated in place, and only outside of a forward pass.
/// Network tensors use the axis order (channel, depth, height, width).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  /// Mutable view of a leaf's values; rejected for tape-produced tensors.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }
  const char* op_name() const { return node_->op; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Accumulated gradient; all zeros when nothing has been accumulated yet.
  std::span<const T> grad() const;
  void zero_grad();

  /// Value copy with no tape history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Records an operation result. `backward` is dropped (and the inputs
/// forgotten) when no input requires a gradient or gradient recording is
/// disabled. Used by every differentiable operation, including the fused
/// losses.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      const std::vector<Tensor<T>>& inputs, detail::BackwardFn<T> backward);

/// Runs reverse-mode accumulation from a scalar loss into every reachable
/// leaf that requires a gradient. Interior tape nodes are released, so a
/// second call on the same graph is rejected.
template <typename T>
void backward(const Tensor<T>& loss);

/// Disables tape recording on this thread for the guard's lifetime.
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

/// Finite-value checking of every operation output. Enabled by default in
/// builds without NDEBUG.
void set_finite_checks(bool enabled);
bool finite_checks();

namespace testing {

/// Negates the incoming gradient of every tape node whose operation name
/// equals `op` during backward. Empty string disables the fault. Exists so
/// gradient-check suites can prove they detect a broken rule.
void set_backward_fault(std::string_view op);
std::string backward_fault();

}  // namespace testing

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace cardioseq
