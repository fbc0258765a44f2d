#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kfprop/tensor.hpp"

namespace kfprop {

// Trainable leaf. Gradients accumulate across backward passes until
// zero_grad, so several graphs (e.g. one per batch sample) can contribute
// to the same parameter.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

// Recorded computation graph. Ops append nodes in execution order, which is
// automatically a topological order, and backward() replays the recorded
// closures in reverse. A graph can be consumed by backward at most once.
template <typename T>
class Graph {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  using BackwardFn = std::function<void(Graph&, Var)>;

  // Constant (non-differentiable) leaf.
  Var input(Tensor<T> v) {
    nodes_.push_back(Node{std::move(v), Tensor<T>{}, {}, nullptr, false});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // Parameter leaf; repeated calls with the same Param return the same node.
  Var param(Param<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{it->second};
    nodes_.push_back(Node{p.value, Tensor<T>{}, {}, nullptr, true});
    Var v{static_cast<int>(nodes_.size()) - 1};
    Param<T>* pp = &p;
    nodes_.back().bw = [pp](Graph& g, Var self) {
      const Tensor<T>& gr = g.node_grad(self);
      for (std::size_t i = 0; i < gr.numel(); ++i) pp->grad.data[i] += gr.data[i];
    };
    param_nodes_[&p] = v.id;
    return v;
  }

  Var make(Tensor<T> value, std::vector<Var> inputs, BackwardFn bw) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_[check(in)].requires_grad;
    Node n{std::move(value), Tensor<T>{}, std::move(inputs), nullptr, needs};
    if (needs) n.bw = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& val(Var v) const { return nodes_[check(v)].value; }

  bool needs_grad(Var v) const { return nodes_[check(v)].requires_grad; }

  // Gradient buffer for accumulation during backward; null when the node
  // does not require gradients (callers skip the work).
  Tensor<T>* grad_dst(Var v) {
    Node& n = nodes_[check(v)];
    if (!n.requires_grad) return nullptr;
    if (n.grad.numel() == 0) n.grad = Tensor<T>(n.value.shape);
    return &n.grad;
  }

  // Gradient flowing into a node, readable from inside backward closures.
  const Tensor<T>& node_grad(Var v) const {
    const Node& n = nodes_[check(v)];
    if (n.grad.numel() == 0)
      throw std::logic_error("node has no gradient yet (backward ordering bug)");
    return n.grad;
  }

  void backward(Var loss) {
    const Tensor<T>& lv = val(loss);
    if (lv.numel() != 1) throw std::invalid_argument("backward expects a scalar loss");
    Tensor<T> seed(lv.shape, T(1));
    backward(loss, seed);
  }

  void backward(Var out, const Tensor<T>& seed) {
    if (consumed_) throw std::logic_error("graph already consumed by backward");
    consumed_ = true;
    Node& root = nodes_[check(out)];
    if (!root.requires_grad) return;
    if (!seed.same_shape(root.value)) throw std::invalid_argument("seed shape mismatch");
    Tensor<T>* gr = grad_dst(out);
    for (std::size_t i = 0; i < seed.numel(); ++i) gr->data[i] += seed.data[i];
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.numel() == 0 || !n.bw) continue;
      n.bw(*this, Var{i});
    }
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily during backward
    std::vector<Var> inputs;
    BackwardFn bw;
    bool requires_grad = false;
  };

  std::size_t check(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw std::logic_error("invalid graph var");
    return static_cast<std::size_t>(v.id);
  }

  // deque so references returned by val() stay valid while nodes are appended
  std::deque<Node> nodes_;
  std::unordered_map<Param<T>*, int> param_nodes_;
  bool consumed_ = false;
};

}  // namespace kfprop
