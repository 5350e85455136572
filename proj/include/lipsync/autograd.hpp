#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "lipsync/tensor.hpp"

namespace lipsync::core {

// Define-by-run reverse-mode autodiff. Every op builds a Node holding the
// forward value, the parent links and a pull-style backward closure that
// reads this node's grad and accumulates into the parents' grads.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_op;
  const char* op = "leaf";

  Tensor& ensure_grad() {
    if (!has_grad) {
      grad = Tensor::zeros(value.shape());
      has_grad = true;
    }
    return grad;
  }

  void accumulate(const Tensor& g) {
    Tensor& dst = ensure_grad();
    const double* src = g.data();
    double* d = dst.data();
    int64_t n = dst.numel();
    for (int64_t i = 0; i < n; ++i) d[i] += src[i];
  }

  void zero_grad() {
    if (has_grad) grad.fill(0.0);
  }
};

inline Var make_leaf(Tensor v, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

inline Var constant(Tensor v) { return make_leaf(std::move(v), false); }

inline Var make_node(Tensor value, std::vector<Var> parents,
                     std::function<void(Node&)> backward, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p && p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_op = std::move(backward);
  n->op = op;
  return n;
}

// Topological order by iterative post-order DFS over parents.
inline void topo_order(const Var& root, std::vector<Node*>& out) {
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      out.push_back(node);
      stack.pop_back();
    }
  }
}

// Backpropagate from a scalar root (or seed with an explicit cotangent).
inline void backward(const Var& root, const Tensor* seed = nullptr) {
  if (!root->requires_grad) return;
  if (seed) {
    check_arg(seed->shape() == root->value.shape(), "backward: seed shape mismatch");
    root->accumulate(*seed);
  } else {
    check_arg(root->value.numel() == 1, "backward: root must be scalar unless seeded");
    root->accumulate(Tensor::scalar(1.0));
  }
  std::vector<Node*> order;
  topo_order(root, order);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward_op && n->has_grad) n->backward_op(*n);
  }
}

}  // namespace lipsync::core
