/* Copyright 2026 The qat-tradeoff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Reverse-mode autodiff tape. Each op appends a node holding its forward value
// and a closure that pushes the node's gradient onto its inputs. backward()
// walks the nodes in exact reverse recording order, which is a valid reverse
// topological order because inputs are always recorded before their users.
//
// A tape is confined to one thread and lives for one forward/backward pass.

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "qat/tensor.hpp"

namespace qat::nn {

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> momentum;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), momentum(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>&)>;

  Var constant(Tensor<T> v) { return push(std::move(v), false, nullptr, nullptr); }
  Var variable(Tensor<T> v) { return push(std::move(v), true, nullptr, nullptr); }
  Var parameter(Parameter<T>& p) { return push(p.value, true, nullptr, &p); }

  Var record(Tensor<T> value, bool requires_grad, Backward fn) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(fn) : nullptr, nullptr);
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Replaces the forward value of the most recent node (same shape). Used to
  // substitute an integer-domain result for a float op whose gradient is kept.
  void override_value(Var v, Tensor<T> value) {
    if (v.id + 1 != nodes_.size()) throw std::logic_error("override_value: node already consumed");
    require_same_shape(nodes_[v.id].value.shape(), value.shape(), "override_value");
    nodes_[v.id].value = std::move(value);
  }

  void accumulate(Var v, const Tensor<T>& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    require_same_shape(n.value.shape(), g.shape(), "gradient accumulation");
    if (n.grad.empty() && !n.value.empty()) {
      n.grad = g;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  // Seeds d(loss)/d(loss) = 1 and propagates. Parameter gradients are added
  // into Parameter::grad.
  void backward(Var loss) {
    if (nodes_.empty() || !loss.valid()) throw std::logic_error("backward called before forward");
    Node& root = node(loss);
    if (root.value.size() != 1) {
      throw std::logic_error("backward requires a scalar loss, got shape " +
                             to_string(root.value.shape()));
    }
    if (backward_done_) throw std::logic_error("backward already run on this tape");
    backward_done_ = true;
    root.grad = Tensor<T>(root.value.shape(), T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) {
        Tensor<T>& pg = n.param->grad;
        if (pg.shape() != n.grad.shape()) pg = Tensor<T>(n.grad.shape());
        for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
      }
    }
  }

  // Gradient of a node after backward; zeros if nothing flowed into it.
  Tensor<T> grad(Var v) const {
    const Node& n = node(v);
    return n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, bool requires_grad, Backward fn, Parameter<T>* p) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(fn), p, requires_grad});
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw std::out_of_range("tape variable out of range");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("tape variable out of range");
    return nodes_[v.id];
  }

  // deque keeps value references stable while later ops are recorded.
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace qat::nn
