// Copyright 2026 The p2d Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef P2D_AD_TENSOR_HPP_
#define P2D_AD_TENSOR_HPP_

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

namespace p2d::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

[[noreturn]] inline void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

/// Graph vertex. Leaves carry parameters or inputs; interior nodes carry the
/// closure that pushes their gradient into their parents.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return parents.empty(); }
  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : node_(std::make_shared<Node<T>>()) {}
  explicit BasicTensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (values.size() != ad::numel(shape)) {
      shape_fail("tensor", "data length " + std::to_string(values.size()) +
                               " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = ad::numel(shape);
    return BasicTensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }
  static BasicTensor full(Shape shape, T v, bool requires_grad = false) {
    const auto n = ad::numel(shape);
    return BasicTensor(std::move(shape), std::vector<T>(n, v), requires_grad);
  }
  static BasicTensor scalar(T v, bool requires_grad = false) {
    return BasicTensor(Shape{}, std::vector<T>{v}, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  /// Direct write access; intended for parameters and test fixtures, not for
  /// tensors that are already part of a recorded graph.
  std::span<T> mutable_data() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  const char* op() const { return node_->op; }
  T item() const {
    if (numel() != 1) shape_fail("item", "tensor has shape " + shape_str(shape()));
    return node_->value[0];
  }

  /// Copy of the values with no graph history.
  BasicTensor detach() const { return BasicTensor(shape(), node_->value, false); }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// While alive, ops on this thread record no graph (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Builds an op result. The backward closure is attached only when at least
/// one input tracks gradients, so inference never records a graph.
template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                           std::initializer_list<const BasicTensor<T>*> inputs,
                           std::function<void(Node<T>&)> backward_fn) {
  BasicTensor<T> out(std::move(shape), std::move(values));
  bool track = false;
  if (detail::grad_mode())
    for (const auto* in : inputs) track = track || in->requires_grad();
  auto& node = out.node();
  node.op = op;
  if (track) {
    node.requires_grad = true;
    for (const auto* in : inputs) node.parents.push_back(in->node_ptr());
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

template <typename T>
BasicTensor<T> make_result_n(const char* op, Shape shape, std::vector<T> values,
                             const std::vector<BasicTensor<T>>& inputs,
                             std::function<void(Node<T>&)> backward_fn) {
  BasicTensor<T> out(std::move(shape), std::move(values));
  bool track = false;
  if (detail::grad_mode())
    for (const auto& in : inputs) track = track || in.requires_grad();
  auto& node = out.node();
  node.op = op;
  if (track) {
    node.requires_grad = true;
    for (const auto& in : inputs) node.parents.push_back(in.node_ptr());
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate (+=) across
/// calls; interior gradients are scratch and reset on every call.
template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (loss.numel() != 1) {
    shape_fail("backward", "loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  loss.node().ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  for (auto* n : order) {
    if (!n->is_leaf()) std::vector<T>().swap(n->grad);
  }
}

}  // namespace p2d::ad

#endif  // P2D_AD_TENSOR_HPP_
