#include "pwc/autodiff.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace pwc {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
void backward(Var<T> root, const Tensor<T>& seed) {
  if (!root.requires_grad()) return;
  if (seed.shape() != root.shape()) {
    throw DimensionError("backward seed shape " + shape_to_string(seed.shape()) +
                         " does not match root " + shape_to_string(root.shape()));
  }

  // Iterative post-order DFS; graphs can be a few hundred nodes deep.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].node();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Tensor<T>& g = root.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template void backward<float>(Var<float>, const Tensor<float>&);
template void backward<double>(Var<double>, const Tensor<double>&);

}  // namespace pwc
