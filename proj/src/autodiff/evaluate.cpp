#include "mqf2/autodiff/evaluate.hpp"

#include "mqf2/errors.hpp"

#include <cmath>

namespace mqf2::ad {

namespace {

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

using MapMat = Eigen::Map<Eigen::MatrixXd>;
using ConstMapMat = Eigen::Map<const Eigen::MatrixXd>;

// The SPD ops act on (X + X^T) / 2 so that they are well-defined functions of
// every entry, not only of the triangle the factorization reads.
Eigen::MatrixXd symmetric_part(const double* data, Index n) {
  ConstMapMat m(data, n, n);
  return 0.5 * (m + m.transpose());
}

}  // namespace

Evaluator::Evaluator(const Graph& graph) : graph_(&graph) {}

void Evaluator::sync_constants() {
  const int n = graph_->size();
  if (static_cast<int>(values_.size()) < n) {
    values_.resize(static_cast<std::size_t>(n));
    bound_.resize(static_cast<std::size_t>(n), 0);
    needed_.resize(static_cast<std::size_t>(n), 0);
  }
  for (int i = constants_synced_; i < n; ++i) {
    const Node& node = graph_->node(i);
    if (node.op == Op::constant) {
      values_[static_cast<std::size_t>(i)] = graph_->constant_value(node.payload);
      bound_[static_cast<std::size_t>(i)] = 1;
    }
  }
  constants_synced_ = n;
}

void Evaluator::bind(Var leaf, const Tensor& value) { bind_node(leaf.id(), value); }

void Evaluator::bind_node(int id, const Tensor& value) {
  sync_constants();
  const Node& node = graph_->node(id);
  if (node.op != Op::leaf) throw ShapeError("bind: node is not a leaf");
  const std::string& name = graph_->leaves()[static_cast<std::size_t>(node.payload)].name;
  if (value.rows() != node.rows || value.cols() != node.cols) {
    throw ShapeError("leaf '" + name + "' expects " + std::to_string(node.rows) + "x" + std::to_string(node.cols) +
                     ", got " + std::to_string(value.rows()) + "x" + std::to_string(value.cols()));
  }
  values_[static_cast<std::size_t>(id)] = value;
  bound_[static_cast<std::size_t>(id)] = 1;
}

void Evaluator::bind(const std::string& name, const Tensor& value) { bind_node(graph_->leaf_node(name), value); }

void Evaluator::run(std::span<const Var> roots) {
  sync_constants();
  int top = -1;
  std::fill(needed_.begin(), needed_.end(), 0);
  for (const Var& r : roots) {
    needed_[static_cast<std::size_t>(r.id())] = 1;
    top = std::max(top, r.id());
  }
  for (int i = top; i >= 0; --i) {
    if (!needed_[static_cast<std::size_t>(i)]) continue;
    const Node& node = graph_->node(i);
    if (node.a >= 0) needed_[static_cast<std::size_t>(node.a)] = 1;
    if (node.b >= 0) needed_[static_cast<std::size_t>(node.b)] = 1;
  }
  for (int i = 0; i <= top; ++i) {
    if (!needed_[static_cast<std::size_t>(i)]) continue;
    const Node& node = graph_->node(i);
    if (node.op == Op::leaf) {
      if (!bound_[static_cast<std::size_t>(i)]) {
        throw UnboundLeaf(graph_->leaves()[static_cast<std::size_t>(node.payload)].name);
      }
      continue;
    }
    if (node.op == Op::constant) continue;
    compute(i);
  }
}

void Evaluator::compute(int id) {
  const Node& node = graph_->node(id);
  Tensor& out = values_[static_cast<std::size_t>(id)];
  const Tensor& a = values_[static_cast<std::size_t>(node.a)];
  static const Tensor kEmpty;
  const Tensor& b = node.b >= 0 ? values_[static_cast<std::size_t>(node.b)] : kEmpty;
  out.resize(node.rows, node.cols);

  switch (node.op) {
    case Op::add: out = a + b; break;
    case Op::sub: out = a - b; break;
    case Op::neg: out = -a; break;
    case Op::scale: out = node.c * a; break;
    case Op::add_const: out = a.array() + node.c; break;
    case Op::scale_by: out = a(0, 0) * b; break;
    case Op::hadamard: out = a.cwiseProduct(b); break;
    case Op::matmul: out.noalias() = a * b; break;
    case Op::transpose: out = a.transpose(); break;
    case Op::softplus: out = a.unaryExpr(&softplus_scalar); break;
    case Op::sigmoid: out = a.unaryExpr(&sigmoid_scalar); break;
    case Op::relu: out = a.cwiseMax(0.0); break;
    case Op::step: out = (a.array() > 0.0).cast<double>(); break;
    case Op::tanh: out = a.array().tanh(); break;
    case Op::exp: out = a.array().exp(); break;
    case Op::log: out = a.array().log(); break;
    case Op::pow: {
      const double p = node.c;
      if (p == 1.0) {
        out = a;
      } else if (p == 0.0) {
        out.setOnes();
      } else if (p == 2.0) {
        out = a.array().square();
      } else if (p == 0.5) {
        out = a.array().sqrt();
      } else {
        out = a.array().pow(p);
      }
      break;
    }
    case Op::sum: out(0, 0) = a.sum(); break;
    case Op::fill: out.setConstant(a(0, 0)); break;
    case Op::repeat_cols: {
      const Index k = node.i0;
      for (Index j = 0; j < a.cols(); ++j) {
        for (Index r = 0; r < k; ++r) out.col(j * k + r) = a.col(j);
      }
      break;
    }
    case Op::group_sum_cols: {
      const Index k = node.i0;
      for (Index j = 0; j < node.cols; ++j) out.col(j) = a.middleCols(j * k, k).rowwise().sum();
      break;
    }
    case Op::tile_cols: {
      const Index k = node.i0;
      const Index c = a.cols();
      for (Index r = 0; r < k; ++r) out.middleCols(r * c, c) = a;
      break;
    }
    case Op::block_sum_cols: {
      const Index k = node.i0;
      const Index c = node.cols;
      out = a.leftCols(c);
      for (Index r = 1; r < k; ++r) out += a.middleCols(r * c, c);
      break;
    }
    case Op::col_slice: out = a.middleCols(node.i0, node.i1); break;
    case Op::pad_cols:
      out.setZero();
      out.middleCols(node.i0, a.cols()) = a;
      break;
    case Op::row_slice: out = a.middleRows(node.i0, node.i1); break;
    case Op::pad_rows:
      out.setZero();
      out.middleRows(node.i0, a.rows()) = a;
      break;
    case Op::batch_matmul: {
      const Index n = node.i0;
      for (Index j = 0; j < node.cols; ++j) {
        MapMat(out.col(j).data(), n, n).noalias() =
            ConstMapMat(a.col(j).data(), n, n) * ConstMapMat(b.col(j).data(), n, n);
      }
      break;
    }
    case Op::batch_transpose: {
      const Index n = node.i0;
      for (Index j = 0; j < node.cols; ++j) {
        MapMat(out.col(j).data(), n, n) = ConstMapMat(a.col(j).data(), n, n).transpose();
      }
      break;
    }
    case Op::batch_inverse_spd: {
      const Index n = node.i0;
      for (Index j = 0; j < node.cols; ++j) {
        Eigen::LLT<Eigen::MatrixXd> llt(symmetric_part(a.col(j).data(), n));
        if (llt.info() != Eigen::Success) throw HessianNotPD("inverse, batch column " + std::to_string(j));
        MapMat(out.col(j).data(), n, n) = llt.solve(Eigen::MatrixXd::Identity(n, n));
      }
      break;
    }
    case Op::batch_logdet_spd: {
      const Index n = node.i0;
      for (Index j = 0; j < node.cols; ++j) {
        Eigen::LLT<Eigen::MatrixXd> llt(symmetric_part(a.col(j).data(), n));
        if (llt.info() != Eigen::Success) throw HessianNotPD("log-determinant, batch column " + std::to_string(j));
        out(0, j) = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      }
      break;
    }
    case Op::leaf:
    case Op::constant:
      break;
  }
}

Tensor evaluate(const Graph& graph, const std::map<std::string, Tensor>& bindings, Var root) {
  Evaluator ev(graph);
  for (const auto& [name, value] : bindings) ev.bind(name, value);
  ev.run({root});
  return ev.value(root);
}

}  // namespace mqf2::ad
