#pragma once

#include <cstdint>
#include <vector>

#include "streamrec/tensor.hpp"

namespace streamrec {

// Handle into a Tape. Only valid for the tape that created it.
struct NodeRef {
  std::uint32_t index = UINT32_MAX;
  bool valid() const { return index != UINT32_MAX; }
};

// Reverse-mode differentiation tape over Tensor-valued nodes. One tape per
// forward pass; nodes are appended in topological order so backward() is a
// single reverse sweep. Values are immutable once a node is created.
//
// External leaves view caller-owned tensors (parameters); the caller must
// keep them alive and unchanged for the life of the tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  NodeRef constant(Tensor v);
  NodeRef external(const Tensor* v);

  NodeRef add(NodeRef a, NodeRef b);
  NodeRef sub(NodeRef a, NodeRef b);
  NodeRef mul(NodeRef a, NodeRef b);  // elementwise
  NodeRef div(NodeRef a, NodeRef b);  // elementwise
  NodeRef scale(NodeRef a, double c);
  NodeRef concat(NodeRef a, NodeRef b);
  NodeRef dot(NodeRef a, NodeRef b);      // -> scalar
  NodeRef matvec(NodeRef w, NodeRef x);   // w: (m,n), x: (n) -> (m)
  NodeRef tanh(NodeRef a);
  NodeRef sigmoid(NodeRef a);
  NodeRef softplus(NodeRef a);
  NodeRef log(NodeRef a);
  NodeRef sqrt(NodeRef a);
  NodeRef sum(NodeRef a);                 // -> scalar
  NodeRef select_row(NodeRef table, std::size_t row);
  // Weighted sum of table rows: sum_k weights[k] * table[rows[k], :].
  NodeRef rows_weighted_sum(NodeRef table, std::vector<std::uint32_t> rows,
                            std::vector<double> weights);
  // Identity forward, zero backward.
  NodeRef stop_gradient(NodeRef a);

  const Tensor& value(NodeRef n) const;
  // Gradient accumulated by the last backward(); zeros-shaped-empty if the
  // node was not on the path.
  const Tensor& grad(NodeRef n) const;
  // Rows of a table leaf referenced by select_row / rows_weighted_sum,
  // deduplicated and sorted.
  std::vector<std::uint32_t> touched_rows(NodeRef n) const;

  // Seeds d(root)/d(root)=1 and sweeps the tape in reverse. `root` must be
  // scalar. Sets gradients of every contributing node.
  void backward(NodeRef root);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kConst, kExternal, kAdd, kSub, kMul, kDiv, kScale, kConcat, kDot,
    kMatVec, kTanh, kSigmoid, kSoftplus, kLog, kSqrt, kSum, kSelectRow,
    kRowsWeightedSum, kStopGradient,
  };

  struct Node {
    Op op;
    std::uint32_t a = UINT32_MAX;
    std::uint32_t b = UINT32_MAX;
    Tensor owned;                     // value for computed/constant nodes
    const Tensor* external = nullptr; // value for external leaves
    Tensor grad;
    double c = 0.0;                   // kScale payload
    std::vector<std::uint32_t> rows;  // kSelectRow / kRowsWeightedSum payload
    std::vector<double> weights;      // kRowsWeightedSum payload

    const Tensor& val() const { return external ? *external : owned; }
  };

  NodeRef push(Node n);
  Tensor& ensure_grad(std::uint32_t idx);
  const Tensor& val(std::uint32_t idx) const { return nodes_[idx].val(); }

  std::vector<Node> nodes_;
  Tensor empty_;
};

}  // namespace streamrec
