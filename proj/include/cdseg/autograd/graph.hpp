#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "cdseg/core/error.hpp"
#include "cdseg/core/matrix.hpp"

namespace cdseg::autograd {

/// Optimizer parameter group. Attention and fusion blocks train at the
/// block learning rate, everything else at the base rate.
enum class ParamGroup { base, block };

template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  ParamGroup group = ParamGroup::base;
};

/// Handle to a node of a Graph.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

template <class T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<EigenRowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const EigenRowMat<T>>;

template <class T>
MatMap<T> as_eigen(Matrix<T>& m) {
  return MatMap<T>(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}
template <class T>
ConstMatMap<T> as_eigen(const Matrix<T>& m) {
  return ConstMatMap<T>(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

/// Reverse-mode tape over dense matrices.
///
/// Nodes are appended in evaluation order, so reverse iteration is a valid
/// topological order for backward(). A graph with gradients disabled records
/// values only. Graphs hold closures over `this` and are pinned in memory.
template <class T>
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Matrix<T> v) { return push(std::move(v), false, {}); }

  /// Leaf bound to a parameter; repeated calls return the same node and
  /// backward() accumulates into `p.grad`.
  Var param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
    Var v = push(p.value, grad_enabled_, {});
    nodes_[v.id].param = &p;
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  const Matrix<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Matrix<T>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) n.grad = Matrix<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool has_grad(Var v) const { return nodes_[v.id].grad.size() == nodes_[v.id].value.size() && nodes_[v.id].value.size() > 0; }

  /// Backpropagates from a 1x1 root and accumulates into bound parameters.
  void backward(Var root) {
    if (!grad_enabled_) throw ConsistencyError("backward on a graph without gradients");
    const Matrix<T>& r = value(root);
    if (r.rows() != 1 || r.cols() != 1) throw ShapeError("backward: root must be 1x1");
    grad(root)[0] = T(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward();
    }
    for (auto& [p, id] : param_nodes_) {
      Node& n = nodes_[id];
      if (n.grad.size() == 0) continue;
      if (p->grad.size() != p->value.size()) p->grad = Matrix<T>(p->value.rows(), p->value.cols());
      for (std::size_t k = 0; k < n.grad.size(); ++k) p->grad[k] += n.grad[k];
    }
  }

  /// Appends a node. `back` runs during backward() when the node has a
  /// gradient; it must only touch the gradients of earlier nodes.
  Var push(Matrix<T> value, bool requires_grad, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  bool any_requires_grad(std::initializer_list<Var> vs) const {
    if (!grad_enabled_) return false;
    for (Var v : vs)
      if (v.valid() && nodes_[v.id].requires_grad) return true;
    return false;
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    std::function<void()> backward;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<Parameter<T>*, std::size_t> param_nodes_;
};

}  // namespace cdseg::autograd
