#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "las/tensor.hpp"

namespace las {

// Reverse-mode tape. Operations record their forward value and a backward
// closure; backward() replays the closures in reverse creation order, so
// gradient accumulation order is fixed and runs are bit-reproducible.
// A Graph is confined to one worker at a time.
class Graph {
 public:
  using NodeId = std::int32_t;

  // Leaf holding a constant (targets, features). Still receives a gradient
  // slot, nobody reads it.
  NodeId constant(Tensor t);
  // Named trainable leaf. Registering the same name twice is an error.
  NodeId param(const std::string& name, const Tensor& value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId exp(NodeId a);
  NodeId matvec(NodeId w, NodeId x);
  NodeId matmul_nt(NodeId a, NodeId b);
  NodeId add_rowbcast(NodeId m, NodeId q);
  NodeId matt_vec(NodeId m, NodeId w);
  NodeId concat(NodeId a, NodeId b);
  NodeId slice(NodeId a, std::int64_t begin, std::int64_t len);
  NodeId stack_rows(const std::vector<NodeId>& rows);
  NodeId embed_row(NodeId m, std::int64_t r);
  NodeId softmax(NodeId v);
  NodeId log_softmax(NodeId v);
  NodeId conv1d(NodeId signal, NodeId filters);
  // dot(a, b) -> scalar node
  NodeId dot(NodeId a, NodeId b);
  NodeId sum(NodeId a);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  // Valid after backward().
  const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Tensor& grad(const std::string& param_name) const;
  bool has_param(const std::string& name) const { return params_.count(name) != 0; }
  NodeId param_id(const std::string& name) const { return params_.at(name); }

  // Fills every gradient slot by reverse replay from `loss` (must be a
  // scalar). Parameters the loss never touched keep exact-zero gradients.
  // A non-finite parameter gradient raises NumericError naming the tensor.
  void backward(NodeId loss);

  // name -> gradient for every registered parameter (copies).
  std::map<std::string, Tensor> param_grads() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Graph&, NodeId)> back;  // empty for leaves
  };

  NodeId push(Tensor value, std::function<void(Graph&, NodeId)> back);
  Tensor& grad_mut(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> params_;
};

}  // namespace las
