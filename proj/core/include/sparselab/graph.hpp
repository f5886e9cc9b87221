// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "sparselab/errors.hpp"
#include "sparselab/numerics.hpp"
#include "sparselab/tensor.hpp"

namespace sparselab {

enum class OpKind {
  leaf,
  constant,
  matmul,
  matmul_nt,
  add,
  subtract,
  multiply,
  scale,
  add_bias,
  relu,
  softmax_rows,
  layer_norm,
  slice_rows,
  slice_cols,
  concat_rows,
  concat_cols,
  gather_rows,
  sum,
  cross_entropy,
  structural_mask,
  topk_mask,
  sparsemax_rows,
  entmax15_rows,
};

template <std::floating_point T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <std::floating_point T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
};

/// Per-node gradients produced by Graph::backward, indexed by node id.
template <std::floating_point T>
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor<T>> grads) : grads_(std::move(grads)) {}

  const Tensor<T>& operator[](std::size_t id) const { return grads_.at(id); }
  const Tensor<T>& operator[](Var<T> v) const { return grads_.at(v.id); }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::vector<Tensor<T>> grads_;
};

/// Append-only tape of differentiable operations.
///
/// Nodes are recorded in evaluation order, so every input id precedes its
/// consumer and the tape is acyclic by construction. Node storage is a deque:
/// references to recorded values stay valid while the graph grows, which lets
/// backward closures hold plain pointers to the forward values they need.
template <std::floating_point T>
class Graph {
 public:
  using TensorT = Tensor<T>;
  /// Maps the gradient of a node's output to one gradient per input. An empty
  /// tensor means "no contribution".
  using BackwardFn = std::function<std::vector<TensorT>(const TensorT& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Differentiable input.
  Var<T> leaf(TensorT value) {
    return push(OpKind::leaf, std::move(value), {}, nullptr, true);
  }

  /// Input that never receives a gradient.
  Var<T> constant(TensorT value) {
    return push(OpKind::constant, std::move(value), {}, nullptr, false);
  }

  /// Records an operation whose forward value is already computed.
  Var<T> record(OpKind kind, TensorT value, std::vector<std::size_t> inputs,
                BackwardFn backward) {
    bool needs_grad = false;
    for (std::size_t in : inputs) {
      if (in >= nodes_.size()) throw ContractError("graph input id out of range");
      needs_grad = needs_grad || nodes_[in].requires_grad;
    }
    return push(kind, std::move(value), std::move(inputs), std::move(backward),
                needs_grad);
  }

  const TensorT& value(std::size_t id) const { return nodes_.at(id).value; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_.at(id).inputs;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar node. Gradients reaching a node through
  /// several consumers are summed. Leaves and constants the output does not
  /// depend on get zero gradients; such interior nodes keep an empty tensor.
  Gradients<T> backward(Var<T> output) const {
    if (output.graph != this) throw ContractError("backward: foreign Var");
    const TensorT& out = value(output.id);
    if (out.size() != 1) {
      throw ContractError("backward: output must be scalar, got shape " +
                          shape_string(out.shape()));
    }
    std::vector<TensorT> grads(nodes_.size());
    grads[output.id] = TensorT(out.shape(), T(1));
    for (std::size_t id = output.id + 1; id-- > 0;) {
      const Node& node = nodes_[id];
      if (grads[id].empty() || !node.requires_grad || !node.backward) continue;
      std::vector<TensorT> contrib = node.backward(grads[id]);
      for (std::size_t slot = 0; slot < node.inputs.size(); ++slot) {
        const std::size_t in = node.inputs[slot];
        if (slot >= contrib.size() || contrib[slot].empty() ||
            !nodes_[in].requires_grad) {
          continue;
        }
        if (grads[in].empty()) {
          grads[in] = std::move(contrib[slot]);
        } else {
          accumulate(grads[in], contrib[slot]);
        }
      }
    }
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const bool is_input = nodes_[id].kind == OpKind::leaf ||
                            nodes_[id].kind == OpKind::constant;
      if (is_input && grads[id].empty()) grads[id] = TensorT(nodes_[id].value.shape());
    }
    return Gradients<T>(std::move(grads));
  }

 private:
  struct Node {
    OpKind kind;
    TensorT value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad;
  };

  Var<T> push(OpKind kind, TensorT value, std::vector<std::size_t> inputs,
              BackwardFn backward, bool requires_grad) {
    nodes_.push_back(Node{kind, std::move(value), std::move(inputs),
                          std::move(backward), requires_grad});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
};

}  // namespace sparselab
