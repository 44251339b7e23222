#pragma once

// Dense tensors with a reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared Node. Operations producing a
// tensor from inputs that require gradients record their inputs and a
// backward rule on the output node; the graph is walked from the loss
// in reverse topological order by backward().

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ojkd/error.hpp"

namespace ojkd {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward_rule;

  bool is_leaf() const { return inputs.empty(); }

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor", "shape " + shape_str(shape) + " holds " +
                                     std::to_string(numel(shape)) +
                                     " elements but data has " +
                                     std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  static Tensor from_node(std::shared_ptr<Node<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Mutable access is meant for leaves (parameters, inputs under test).
  std::span<T> mutable_data() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  T item() const {
    if (size() != 1) {
      throw ShapeError("item", "tensor " + shape_str(shape()) + " is not a scalar");
    }
    return node_->value[0];
  }

  T operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  /// Gradient buffer; empty span if no gradient has been accumulated yet.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }

  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  const std::string& op() const { return node_->op; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  /// Copy of the values with no history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Creates the output of an operation. The backward rule is attached only if
/// some input requires a gradient, so inference graphs carry no history.
template <typename T>
Tensor<T> record(std::string op, Shape shape, std::vector<T> value,
                 std::vector<Tensor<T>> inputs,
                 std::function<void(Node<T>&)> backward_rule) {
  Tensor<T> out(std::move(shape), std::move(value));
  auto* node = out.node();
  node->op = std::move(op);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward_rule = std::move(backward_rule);
  }
  return out;
}

/// Accumulates `g` into input `i` of `node` if that input takes gradients.
/// `fn(grad_span)` receives the input's gradient buffer.
template <typename T, typename Fn>
void accumulate(Node<T>& node, std::size_t i, Fn&& fn) {
  auto& in = *node.inputs[i];
  if (!in.requires_grad) return;
  fn(in.ensure_grad());
}

/// Operations reachable from a root, in an order where every operation
/// appears after the operations producing its inputs.
template <typename T>
struct Tape {
  std::vector<Node<T>*> ops;

  std::size_t size() const { return ops.size(); }
};

template <typename T>
Tape<T> record_tape(const Tensor<T>& root) {
  Tape<T> tape;
  if (!root.defined() || !root.requires_grad()) return tape;
  std::unordered_set<Node<T>*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && !child->is_leaf() && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    if (!node->is_leaf()) tape.ops.push_back(node);
    stack.pop_back();
  }
  return tape;
}

/// Backpropagates `seed` (same shape as `out`) through the recorded graph.
/// Leaf gradients accumulate; intermediate gradients are reset first.
template <typename T>
void backward(const Tensor<T>& out, std::span<const T> seed) {
  if (seed.size() != out.size()) {
    throw ShapeError("backward", "seed gradient has " + std::to_string(seed.size()) +
                                     " elements, output " + shape_str(out.shape()));
  }
  if (!out.requires_grad()) return;
  auto tape = record_tape(out);
  for (auto* op : tape.ops) op->grad.assign(op->value.size(), T(0));
  auto& g = out.node()->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  if (out.node()->is_leaf()) return;
  for (auto it = tape.ops.rbegin(); it != tape.ops.rend(); ++it) {
    (*it)->backward_rule(**it);
  }
}

/// Backpropagates from a scalar loss.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward", "loss must be scalar, got " + shape_str(loss.shape()));
  }
  const T one(1);
  backward(loss, std::span<const T>(&one, 1));
}

}  // namespace ojkd
