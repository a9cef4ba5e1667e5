#include "streamrec/tape.hpp"

#include <algorithm>
#include <cmath>

#include "streamrec/errors.hpp"

namespace streamrec {
namespace {

// Stable scalar kernels shared by forward and backward.
double k_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double k_softplus(double x) {
  if (x > 35.0) return x;
  return std::log1p(std::exp(x));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace

NodeRef Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeRef{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::ensure_grad(std::uint32_t idx) {
  Node& n = nodes_[idx];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.val().shape);
  return n.grad;
}

NodeRef Tape::constant(Tensor v) {
  Node n;
  n.op = Op::kConst;
  n.owned = std::move(v);
  return push(std::move(n));
}

NodeRef Tape::external(const Tensor* v) {
  Node n;
  n.op = Op::kExternal;
  n.external = v;
  return push(std::move(n));
}

NodeRef Tape::add(NodeRef a, NodeRef b) {
  const Tensor& va = val(a.index);
  const Tensor& vb = val(b.index);
  check_same_shape(va, vb, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.index;
  n.b = b.index;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.owned.data[i] = va.data[i] + vb.data[i];
  return push(std::move(n));
}

NodeRef Tape::sub(NodeRef a, NodeRef b) {
  const Tensor& va = val(a.index);
  const Tensor& vb = val(b.index);
  check_same_shape(va, vb, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.index;
  n.b = b.index;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.owned.data[i] = va.data[i] - vb.data[i];
  return push(std::move(n));
}

NodeRef Tape::mul(NodeRef a, NodeRef b) {
  const Tensor& va = val(a.index);
  const Tensor& vb = val(b.index);
  check_same_shape(va, vb, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.index;
  n.b = b.index;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.owned.data[i] = va.data[i] * vb.data[i];
  return push(std::move(n));
}

NodeRef Tape::div(NodeRef a, NodeRef b) {
  const Tensor& va = val(a.index);
  const Tensor& vb = val(b.index);
  check_same_shape(va, vb, "div");
  Node n;
  n.op = Op::kDiv;
  n.a = a.index;
  n.b = b.index;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.owned.data[i] = va.data[i] / vb.data[i];
  return push(std::move(n));
}

NodeRef Tape::scale(NodeRef a, double c) {
  const Tensor& va = val(a.index);
  Node n;
  n.op = Op::kScale;
  n.a = a.index;
  n.c = c;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i) n.owned.data[i] = c * va.data[i];
  return push(std::move(n));
}

NodeRef Tape::concat(NodeRef a, NodeRef b) {
  const Tensor& va = val(a.index);
  const Tensor& vb = val(b.index);
  if (va.shape.size() != 1 || vb.shape.size() != 1)
    throw ShapeError("concat: rank-1 operands required");
  Node n;
  n.op = Op::kConcat;
  n.a = a.index;
  n.b = b.index;
  n.owned = Tensor::zeros({va.size() + vb.size()});
  std::copy(va.data.begin(), va.data.end(), n.owned.data.begin());
  std::copy(vb.data.begin(), vb.data.end(), n.owned.data.begin() + va.size());
  return push(std::move(n));
}

NodeRef Tape::dot(NodeRef a, NodeRef b) {
  const Tensor& va = val(a.index);
  const Tensor& vb = val(b.index);
  check_same_shape(va, vb, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va.data[i] * vb.data[i];
  Node n;
  n.op = Op::kDot;
  n.a = a.index;
  n.b = b.index;
  n.owned = Tensor{s};
  return push(std::move(n));
}

NodeRef Tape::matvec(NodeRef w, NodeRef x) {
  const Tensor& vw = val(w.index);
  const Tensor& vx = val(x.index);
  if (vw.shape.size() != 2 || vx.shape.size() != 1 || vw.cols() != vx.size())
    throw ShapeError("matvec: incompatible shapes " + shape_str(vw.shape) +
                     " x " + shape_str(vx.shape));
  Node n;
  n.op = Op::kMatVec;
  n.a = w.index;
  n.b = x.index;
  n.owned = Tensor::zeros({vw.rows()});
  const std::size_t m = vw.rows(), k = vw.cols();
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    const double* wrow = vw.data.data() + r * k;
    for (std::size_t c = 0; c < k; ++c) s += wrow[c] * vx.data[c];
    n.owned.data[r] = s;
  }
  return push(std::move(n));
}

NodeRef Tape::tanh(NodeRef a) {
  const Tensor& va = val(a.index);
  Node n;
  n.op = Op::kTanh;
  n.a = a.index;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.owned.data[i] = std::tanh(va.data[i]);
  return push(std::move(n));
}

NodeRef Tape::sigmoid(NodeRef a) {
  const Tensor& va = val(a.index);
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.index;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.owned.data[i] = k_sigmoid(va.data[i]);
  return push(std::move(n));
}

NodeRef Tape::softplus(NodeRef a) {
  const Tensor& va = val(a.index);
  Node n;
  n.op = Op::kSoftplus;
  n.a = a.index;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.owned.data[i] = k_softplus(va.data[i]);
  return push(std::move(n));
}

NodeRef Tape::log(NodeRef a) {
  const Tensor& va = val(a.index);
  Node n;
  n.op = Op::kLog;
  n.a = a.index;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.owned.data[i] = std::log(va.data[i]);
  return push(std::move(n));
}

NodeRef Tape::sqrt(NodeRef a) {
  const Tensor& va = val(a.index);
  Node n;
  n.op = Op::kSqrt;
  n.a = a.index;
  n.owned = Tensor::zeros(va.shape);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.owned.data[i] = std::sqrt(va.data[i]);
  return push(std::move(n));
}

NodeRef Tape::sum(NodeRef a) {
  const Tensor& va = val(a.index);
  double s = 0.0;
  for (double v : va.data) s += v;
  Node n;
  n.op = Op::kSum;
  n.a = a.index;
  n.owned = Tensor{s};
  return push(std::move(n));
}

NodeRef Tape::select_row(NodeRef table, std::size_t row) {
  const Tensor& vt = val(table.index);
  if (vt.shape.size() != 2 || row >= vt.rows())
    throw ShapeError("select_row: row " + std::to_string(row) +
                     " out of table " + shape_str(vt.shape));
  Node n;
  n.op = Op::kSelectRow;
  n.a = table.index;
  n.rows = {static_cast<std::uint32_t>(row)};
  n.owned = Tensor::zeros({vt.cols()});
  std::copy(vt.data.begin() + row * vt.cols(),
            vt.data.begin() + (row + 1) * vt.cols(), n.owned.data.begin());
  nodes_[table.index].rows.push_back(static_cast<std::uint32_t>(row));
  return push(std::move(n));
}

NodeRef Tape::rows_weighted_sum(NodeRef table, std::vector<std::uint32_t> rows,
                                std::vector<double> weights) {
  const Tensor& vt = val(table.index);
  if (vt.shape.size() != 2)
    throw ShapeError("rows_weighted_sum: table must be rank-2");
  if (rows.size() != weights.size())
    throw ShapeError("rows_weighted_sum: rows/weights length mismatch");
  for (std::uint32_t r : rows)
    if (r >= vt.rows())
      throw ShapeError("rows_weighted_sum: row " + std::to_string(r) +
                       " out of table " + shape_str(vt.shape));
  Node n;
  n.op = Op::kRowsWeightedSum;
  n.a = table.index;
  n.owned = Tensor::zeros({vt.cols()});
  const std::size_t d = vt.cols();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double* src = vt.data.data() + rows[k] * d;
    for (std::size_t c = 0; c < d; ++c) n.owned.data[c] += weights[k] * src[c];
  }
  for (std::uint32_t r : rows) nodes_[table.index].rows.push_back(r);
  n.rows = std::move(rows);
  n.weights = std::move(weights);
  return push(std::move(n));
}

NodeRef Tape::stop_gradient(NodeRef a) {
  Node n;
  n.op = Op::kStopGradient;
  n.a = a.index;
  n.owned = val(a.index);
  return push(std::move(n));
}

const Tensor& Tape::value(NodeRef n) const { return nodes_[n.index].val(); }

const Tensor& Tape::grad(NodeRef n) const {
  const Node& node = nodes_[n.index];
  return node.grad.empty() ? empty_ : node.grad;
}

std::vector<std::uint32_t> Tape::touched_rows(NodeRef n) const {
  std::vector<std::uint32_t> rows = nodes_[n.index].rows;
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

void Tape::backward(NodeRef root) {
  const Tensor& rv = val(root.index);
  if (rv.size() != 1)
    throw ShapeError("backward: root must be scalar, got " +
                     shape_str(rv.shape));
  ensure_grad(root.index).data[0] = 1.0;

  for (std::uint32_t i = root.index;; --i) {
    Node& n = nodes_[i];
    if (!n.grad.empty()) {
      const Tensor& g = n.grad;
      switch (n.op) {
        case Op::kConst:
        case Op::kExternal:
        case Op::kStopGradient:
          break;
        case Op::kAdd: {
          Tensor& ga = ensure_grad(n.a);
          Tensor& gb = ensure_grad(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) {
            ga.data[k] += g.data[k];
            gb.data[k] += g.data[k];
          }
          break;
        }
        case Op::kSub: {
          Tensor& ga = ensure_grad(n.a);
          Tensor& gb = ensure_grad(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) {
            ga.data[k] += g.data[k];
            gb.data[k] -= g.data[k];
          }
          break;
        }
        case Op::kMul: {
          const Tensor& va = val(n.a);
          const Tensor& vb = val(n.b);
          Tensor& ga = ensure_grad(n.a);
          Tensor& gb = ensure_grad(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) {
            ga.data[k] += g.data[k] * vb.data[k];
            gb.data[k] += g.data[k] * va.data[k];
          }
          break;
        }
        case Op::kDiv: {
          const Tensor& va = val(n.a);
          const Tensor& vb = val(n.b);
          Tensor& ga = ensure_grad(n.a);
          Tensor& gb = ensure_grad(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) {
            ga.data[k] += g.data[k] / vb.data[k];
            gb.data[k] -= g.data[k] * va.data[k] / (vb.data[k] * vb.data[k]);
          }
          break;
        }
        case Op::kScale: {
          Tensor& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < g.size(); ++k)
            ga.data[k] += n.c * g.data[k];
          break;
        }
        case Op::kConcat: {
          Tensor& ga = ensure_grad(n.a);
          Tensor& gb = ensure_grad(n.b);
          const std::size_t na = ga.size();
          for (std::size_t k = 0; k < na; ++k) ga.data[k] += g.data[k];
          for (std::size_t k = 0; k < gb.size(); ++k)
            gb.data[k] += g.data[na + k];
          break;
        }
        case Op::kDot: {
          const Tensor& va = val(n.a);
          const Tensor& vb = val(n.b);
          Tensor& ga = ensure_grad(n.a);
          Tensor& gb = ensure_grad(n.b);
          const double g0 = g.data[0];
          for (std::size_t k = 0; k < va.size(); ++k) {
            ga.data[k] += g0 * vb.data[k];
            gb.data[k] += g0 * va.data[k];
          }
          break;
        }
        case Op::kMatVec: {
          const Tensor& vw = val(n.a);
          const Tensor& vx = val(n.b);
          Tensor& gw = ensure_grad(n.a);
          Tensor& gx = ensure_grad(n.b);
          const std::size_t m = vw.rows(), kk = vw.cols();
          for (std::size_t r = 0; r < m; ++r) {
            const double gr = g.data[r];
            double* gwrow = gw.data.data() + r * kk;
            const double* wrow = vw.data.data() + r * kk;
            for (std::size_t c = 0; c < kk; ++c) {
              gwrow[c] += gr * vx.data[c];
              gx.data[c] += gr * wrow[c];
            }
          }
          break;
        }
        case Op::kTanh: {
          Tensor& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) {
            const double y = n.owned.data[k];
            ga.data[k] += g.data[k] * (1.0 - y * y);
          }
          break;
        }
        case Op::kSigmoid: {
          Tensor& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) {
            const double y = n.owned.data[k];
            ga.data[k] += g.data[k] * y * (1.0 - y);
          }
          break;
        }
        case Op::kSoftplus: {
          const Tensor& va = val(n.a);
          Tensor& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < g.size(); ++k)
            ga.data[k] += g.data[k] * k_sigmoid(va.data[k]);
          break;
        }
        case Op::kLog: {
          const Tensor& va = val(n.a);
          Tensor& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < g.size(); ++k)
            ga.data[k] += g.data[k] / va.data[k];
          break;
        }
        case Op::kSqrt: {
          Tensor& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < g.size(); ++k)
            ga.data[k] += g.data[k] * 0.5 / n.owned.data[k];
          break;
        }
        case Op::kSum: {
          Tensor& ga = ensure_grad(n.a);
          const double g0 = g.data[0];
          for (std::size_t k = 0; k < ga.size(); ++k) ga.data[k] += g0;
          break;
        }
        case Op::kSelectRow: {
          Tensor& gt = ensure_grad(n.a);
          const std::size_t d = g.size();
          double* dst = gt.data.data() + n.rows[0] * d;
          for (std::size_t k = 0; k < d; ++k) dst[k] += g.data[k];
          break;
        }
        case Op::kRowsWeightedSum: {
          Tensor& gt = ensure_grad(n.a);
          const std::size_t d = g.size();
          for (std::size_t j = 0; j < n.rows.size(); ++j) {
            double* dst = gt.data.data() + n.rows[j] * d;
            const double w = n.weights[j];
            for (std::size_t k = 0; k < d; ++k) dst[k] += w * g.data[k];
          }
          break;
        }
      }
    }
    if (i == 0) break;
  }
}

}  // namespace streamrec
