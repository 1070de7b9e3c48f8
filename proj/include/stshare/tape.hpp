#pragma once

#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stshare/tensor.hpp"

namespace stshare {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// A trainable tensor with its gradient buffer and a hierarchical name,
// e.g. "srs.rgb.block3.conv_a.kernel".
template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  std::string name;

  Parameter(std::string n, Tensor<T> v)
      : value(std::move(v)), grad(Tensor<T>::zeros(value.shape())), name(std::move(n)) {}

  void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), T(0)); }
};

// Reverse-mode differentiation record. Nodes are appended in execution order,
// so inputs always precede their consumers and one reverse sweep visits each
// node exactly once.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on demand during backward
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter<T>* param = nullptr;  // set for leaves backed by a Parameter
    bool requires_grad = false;
    bool grad_ready = false;
  };

  Var leaf(Parameter<T>& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Tensor<T> v) {
    Node n;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var make(Tensor<T> value, std::vector<int> inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    for (int i : n.inputs)
      if (node(i).requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(Var v) const { return node(v.id).value; }
  const Shape& shape(Var v) const { return node(v.id).value.shape(); }

  bool requires_grad(Var v) const { return node(v.id).requires_grad; }

  // Gradient buffer of a node, allocated (zero) on first access.
  Tensor<T>& grad(int id) {
    Node& n = node(id);
    if (!n.grad_ready) {
      n.grad = Tensor<T>::zeros(n.value.shape());
      n.grad_ready = true;
    }
    return n.grad;
  }

  Tensor<T>& grad(Var v) { return grad(v.id); }
  bool has_grad(Var v) const { return node(v.id).grad_ready; }

  // Populates grads of every Parameter reachable from `loss`. Unreached
  // parameter grads are left untouched (callers zero them beforehand).
  void backward(Var loss) {
    Node& top = node(loss.id);
    if (!top.value.is_scalar()) throw std::logic_error("backward requires a scalar loss");
    if (!top.requires_grad)
      throw std::logic_error("loss is detached: no differentiable inputs on the tape");
    grad(loss.id)[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = node(i);
      if (!n.requires_grad || !n.grad_ready) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        auto& g = n.param->grad.vec();
        const auto& src = n.grad.vec();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += src[k];
      }
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

 private:
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::deque<Node> nodes_;
};

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace stshare
