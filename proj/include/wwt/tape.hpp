/* Copyright 2026 The WWT Authors. All Rights Reserved.

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

#ifndef WWT_TAPE_HPP_
#define WWT_TAPE_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "wwt/tensor.hpp"

namespace wwt::ad {

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t rank() const { return shape().size(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Wengert list. Nodes are appended in evaluation order, so reverse insertion
// order is a valid reverse topological order.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad, std::string name = {}) {
    check_finite("leaf", value);
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = "leaf";
    n.name = std::move(name);
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Appends an op node. The backward closure is dropped when no input needs a
  // gradient.
  Var<T> record(std::string_view op, Tensor<T> value,
                std::vector<std::size_t> inputs, BackwardFn backward) {
    check_finite(op, value);
    bool rg = false;
    for (std::size_t id : inputs) rg = rg || nodes_.at(id).requires_grad;
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.requires_grad = rg;
    n.op = op;
    n.inputs = std::move(inputs);
    if (rg) n.backward = std::move(backward);
    return Var<T>(this, nodes_.size() - 1);
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::string_view op_name(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_.at(id).inputs;
  }
  const std::string& name(std::size_t id) const { return nodes_.at(id).name; }

  // Gradient buffer of an input, allocated on first use.
  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }
  const Tensor<T>& upstream(std::size_t id) const { return nodes_[id].grad; }

  bool has_grad(std::size_t id) const { return nodes_.at(id).has_grad; }

  // Gradient of the last backward pass w.r.t. any node; zeros when the node
  // was not reached.
  Tensor<T> grad(const Var<T>& v) const {
    const Node& n = nodes_.at(v.id());
    return n.has_grad ? n.grad : Tensor<T>(n.value.shape());
  }

  // Runs reverse accumulation from a scalar loss. Clears earlier gradients
  // so repeated calls are bit-identical.
  void backward(const Var<T>& loss) {
    if (&loss.tape() != this) throw GraphError("loss belongs to another tape");
    const Node& ln = nodes_.at(loss.id());
    if (ln.value.size() != 1) {
      throw GraphError("backward needs a scalar loss, got shape " +
                       to_string(ln.value.shape()));
    }
    if (!ln.requires_grad) {
      throw GraphError("loss is detached: no trainable leaf reaches it");
    }
    for (Node& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor<T>();
    }
    grad_buffer(loss.id())[0] = T{1};
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, id);
    }
    for (const Node& n : nodes_) {
      if (n.has_grad && n.requires_grad && !n.grad.all_finite()) {
        throw NonFiniteError("non-finite gradient at node of op '" +
                             std::string(n.op) + "'");
      }
    }
  }

  // Gradients of every named trainable leaf.
  std::map<std::string, Tensor<T>> gradients() const {
    std::map<std::string, Tensor<T>> out;
    for (const Node& n : nodes_) {
      if (n.op == "leaf" && n.requires_grad && !n.name.empty()) {
        out.emplace(n.name, n.has_grad ? n.grad : Tensor<T>(n.value.shape()));
      }
    }
    return out;
  }

  void set_check_finite(bool on) noexcept { check_finite_ = on; }
  void add_macs(std::uint64_t n) noexcept { macs_ += n; }
  std::uint64_t macs() const noexcept { return macs_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string_view op;
    std::string name;
  };

  void check_finite(std::string_view op, const Tensor<T>& v) const {
    if (check_finite_ && !v.all_finite()) {
      throw NonFiniteError("op '" + std::string(op) +
                           "' produced non-finite values");
    }
  }

  std::deque<Node> nodes_;
  std::uint64_t macs_ = 0;
  bool check_finite_ = true;
};

}  // namespace wwt::ad

#endif  // WWT_TAPE_HPP_
