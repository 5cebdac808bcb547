#pragma once

// Internal graph-node representation shared by the autodiff translation units.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "specrec/autodiff.hpp"

namespace specrec::autodiff::detail {

template <typename T>
struct NodeT {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // lazily allocated
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<NodeT>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(NodeT&)> backward_fn;

  long size() const { return long(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
std::shared_ptr<NodeT<T>> make_leaf(Shape shape, std::vector<T> value, bool requires_grad) {
  auto n = std::make_shared<NodeT<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <typename T>
std::shared_ptr<NodeT<T>> make_op(Shape shape, std::vector<T> value, std::string op,
                                  std::vector<std::shared_ptr<NodeT<T>>> parents) {
  auto n = std::make_shared<NodeT<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = std::move(op);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

}  // namespace specrec::autodiff::detail
