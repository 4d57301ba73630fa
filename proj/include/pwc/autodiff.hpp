#pragma once

// Reverse-mode differentiation over a dynamically recorded graph.
//
// Every differentiable operator produces a Var whose node remembers its
// inputs and a backward closure. The closure reads the node's accumulated
// output gradient and adds the per-input gradients into the input nodes.
// Nodes that do not depend on any gradient-requiring leaf record nothing,
// so inference builds no graph.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pwc/tensor.hpp"

namespace pwc {

template <typename T>
class Var;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<Var<T>> inputs;
  std::function<void(Node<T>&)> backward;
  std::string op;
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::string& op() const { return node_->op; }

  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor<T>& grad() const { return node_->grad; }

  /// Gradient buffer, zero-initialised on first access.
  Tensor<T>& grad_buffer() {
    if (node_->grad.empty()) node_->grad = Tensor<T>(node_->value.shape());
    return node_->grad;
  }
  void zero_grad() { node_->grad = Tensor<T>(); }

  Node<T>* node() const { return node_.get(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Leaf that receives gradients (parameters, inputs under test).
template <typename T>
Var<T> make_leaf(Tensor<T> value, std::string name = "leaf") {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->op = std::move(name);
  return Var<T>(std::move(n));
}

/// Leaf that never receives gradients (images, supervision).
template <typename T>
Var<T> make_constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = "constant";
  return Var<T>(std::move(n));
}

/// Records an operator result. `backward` is dropped when no input needs
/// gradients.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward, std::string op) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = std::move(op);
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

/// Back-propagates from `root` with seed gradient `seed` (same shape as root).
template <typename T>
void backward(Var<T> root, const Tensor<T>& seed);

/// Back-propagates from a scalar `root` with seed 1.
template <typename T>
void backward(Var<T> root) {
  if (root.value().size() != 1) {
    throw DimensionError("backward without a seed requires a scalar root, got " +
                         shape_to_string(root.shape()));
  }
  backward(root, Tensor<T>::scalar(T{1}));
}

extern template void backward<float>(Var<float>, const Tensor<float>&);
extern template void backward<double>(Var<double>, const Tensor<double>&);

}  // namespace pwc
