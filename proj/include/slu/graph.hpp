#pragma once

#include "slu/tensor.hpp"

#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

namespace slu {

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  int id = -1;

  const Matrix<Scalar>& value() const { return graph->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Scalar item() const { return value()(0, 0); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward() walks
/// them in reverse. Parameter leaves accumulate directly into Tensor::grad.
template <typename Scalar>
class Graph {
 public:
  // Receives the gradient flowing into the node being back-propagated.
  using Backprop = std::function<void(Graph&, const Matrix<Scalar>&)>;

  explicit Graph(bool record_gradients = true) : recording_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> constant(Matrix<Scalar> value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, {}, false});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<Scalar> parameter(Tensor<Scalar>& tensor) {
    auto it = leaves_.find(&tensor);
    if (it != leaves_.end()) return {this, it->second};
    nodes_.push_back(Node{{}, {}, &tensor, {}, recording_ && tensor.requires_grad});
    const int id = static_cast<int>(nodes_.size()) - 1;
    leaves_.emplace(&tensor, id);
    return {this, id};
  }

  // Appends an op result. The closure is kept only when some input needs a
  // gradient, so constant sub-graphs cost nothing on the way back.
  Var<Scalar> record(Matrix<Scalar> value, std::initializer_list<Var<Scalar>> inputs, Backprop backprop) {
    bool needs = false;
    if (recording_) {
      for (const auto& v : inputs) needs = needs || nodes_[v.id].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, nullptr, needs ? std::move(backprop) : Backprop{}, needs});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<Scalar> record(Matrix<Scalar> value, const std::vector<Var<Scalar>>& inputs, Backprop backprop) {
    bool needs = false;
    if (recording_) {
      for (const auto& v : inputs) needs = needs || nodes_[v.id].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, nullptr, needs ? std::move(backprop) : Backprop{}, needs});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix<Scalar>& value(int id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }

  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var<Scalar> v) const { return nodes_[v.id].needs_grad; }

  // Gradient buffer of a node, zero-initialised on first access.
  Matrix<Scalar>& grad(int id) {
    Node& n = nodes_[id];
    if (n.param) return n.param->ensure_grad();
    if (n.grad.size() == 0) {
      const auto& v = n.value;
      n.grad = Matrix<Scalar>::Zero(v.rows(), v.cols());
    }
    return n.grad;
  }

  void backward(Var<Scalar> root) {
    const auto& v = value(root.id);
    if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("backward() requires a scalar (1x1) root");
    if (!nodes_[root.id].needs_grad) return;
    grad(root.id)(0, 0) += Scalar(1);
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.backprop || n.grad.size() == 0) continue;
      // The closure may touch other nodes' buffers but never this one.
      n.backprop(*this, n.grad);
    }
  }

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    Tensor<Scalar>* param;
    Backprop backprop;
    bool needs_grad;
  };

  bool recording_;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<Scalar>*, int> leaves_;
};

}  // namespace slu
