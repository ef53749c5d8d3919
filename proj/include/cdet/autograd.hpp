#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cdet/tensor.hpp"

namespace cdet {

// Define-by-run reverse-mode autodiff. Each op allocates an output node whose
// closure scatters the output gradient into its parents. Graphs are rebuilt
// every forward pass and freed when the loss node goes out of scope; leaves
// (parameters) persist across steps and keep their accumulated gradient until
// zero_grad.
template <typename T>
struct VarNode {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;  // set on leaves that want gradient
  bool needs_grad = false;     // true if any ancestor leaf requires gradient
  std::vector<std::shared_ptr<VarNode>> parents;
  std::function<void(VarNode&)> backward_fn;
};

template <typename T>
using Var = std::shared_ptr<VarNode<T>>;

template <typename T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<VarNode<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  return n;
}

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents,
                 std::function<void(VarNode<T>&)> backward_fn) {
  auto n = std::make_shared<VarNode<T>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p && p->needs_grad) n->needs_grad = true;
  if (n->needs_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

template <typename T>
Tensor<T>& ensure_grad(VarNode<T>& n) {
  if (!n.grad.defined()) n.grad = Tensor<T>::zeros(n.value.shape());
  return n.grad;
}

template <typename T>
void accumulate_grad(VarNode<T>& n, const Tensor<T>& g) {
  Tensor<T>& dst = ensure_grad(n);
  T* d = dst.data();
  const T* s = g.data();
  for (std::int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

// Runs reverse-mode accumulation from a scalar root. Seeds d(root)/d(root)=1.
template <typename T>
void backward(const Var<T>& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar");

  // Iterative postorder DFS over the parent DAG.
  std::vector<VarNode<T>*> order;
  std::unordered_set<VarNode<T>*> visited;
  struct Frame {
    VarNode<T>* node;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      VarNode<T>* p = f.node->parents[f.next++].get();
      if (p && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  ensure_grad(*root).fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    VarNode<T>* n = *it;
    if (n->backward_fn && n->grad.defined() && n->needs_grad) n->backward_fn(*n);
  }
}

template <typename T>
T scalar_value(const Var<T>& v) {
  return v->value[0];
}

}  // namespace cdet
