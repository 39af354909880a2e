#include "mqf2/autodiff/graph.hpp"

#include "mqf2/errors.hpp"

#include <sstream>

namespace mqf2::ad {

namespace {

std::string shape_str(Index r, Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

void require(bool ok, Op op, const std::string& detail) {
  if (!ok) throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::neg: return "neg";
    case Op::scale: return "scale";
    case Op::add_const: return "add_const";
    case Op::scale_by: return "scale_by";
    case Op::hadamard: return "hadamard";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::softplus: return "softplus";
    case Op::sigmoid: return "sigmoid";
    case Op::relu: return "relu";
    case Op::step: return "step";
    case Op::tanh: return "tanh";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::pow: return "pow";
    case Op::sum: return "sum";
    case Op::fill: return "fill";
    case Op::repeat_cols: return "repeat_cols";
    case Op::group_sum_cols: return "group_sum_cols";
    case Op::tile_cols: return "tile_cols";
    case Op::block_sum_cols: return "block_sum_cols";
    case Op::col_slice: return "col_slice";
    case Op::pad_cols: return "pad_cols";
    case Op::row_slice: return "row_slice";
    case Op::pad_rows: return "pad_rows";
    case Op::batch_matmul: return "batch_matmul";
    case Op::batch_transpose: return "batch_transpose";
    case Op::batch_inverse_spd: return "batch_inverse_spd";
    case Op::batch_logdet_spd: return "batch_logdet_spd";
  }
  return "?";
}

Index Var::rows() const { return graph_->node(id_).rows; }
Index Var::cols() const { return graph_->node(id_).cols; }

Var Graph::append(Node node) {
  nodes_.push_back(node);
  return Var(this, size() - 1);
}

Var Graph::leaf(const std::string& name, Index rows, Index cols, bool differentiable) {
  if (leaf_by_name_.count(name) != 0) throw ShapeError("duplicate leaf '" + name + "'");
  if (rows <= 0 || cols <= 0) throw ShapeError("leaf '" + name + "' has empty shape");
  Node n;
  n.op = Op::leaf;
  n.rows = rows;
  n.cols = cols;
  n.payload = static_cast<int>(leaves_.size());
  Var v = append(n);
  leaves_.push_back({name, v.id(), differentiable});
  leaf_by_name_[name] = v.id();
  return v;
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = Op::constant;
  n.rows = value.rows();
  n.cols = value.cols();
  n.payload = static_cast<int>(constants_.size());
  constants_.push_back(std::move(value));
  return append(n);
}

Var Graph::scalar(double value) { return constant(Tensor::Constant(1, 1, value)); }
Var Graph::zeros(Index rows, Index cols) { return constant(Tensor::Zero(rows, cols)); }
Var Graph::ones(Index rows, Index cols) { return constant(Tensor::Ones(rows, cols)); }

int Graph::leaf_node(const std::string& name) const {
  auto it = leaf_by_name_.find(name);
  if (it == leaf_by_name_.end()) throw UnboundLeaf(name);
  return it->second;
}

Var Graph::find_leaf(const std::string& name) { return Var(this, leaf_node(name)); }

Var Graph::push(Op op, Var a, Var b, double c, Index i0, Index i1) {
  if (!a.valid() || &a.graph() != this) throw ShapeError(std::string(op_name(op)) + ": operand from another graph");
  if (b.valid() && &b.graph() != this) throw ShapeError(std::string(op_name(op)) + ": operand from another graph");
  const Node& na = node(a.id());
  Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.valid() ? b.id() : -1;
  n.c = c;
  n.i0 = i0;
  n.i1 = i1;
  n.rows = na.rows;
  n.cols = na.cols;

  auto need_b = [&]() -> const Node& {
    require(b.valid(), op, "missing second operand");
    return node(b.id());
  };

  switch (op) {
    case Op::add:
    case Op::sub:
    case Op::hadamard: {
      const Node& nb = need_b();
      require(na.rows == nb.rows && na.cols == nb.cols, op,
              shape_str(na.rows, na.cols) + " vs " + shape_str(nb.rows, nb.cols));
      break;
    }
    case Op::scale_by: {
      // a is the 1x1 factor, b the tensor.
      const Node& nb = need_b();
      require(na.rows == 1 && na.cols == 1, op, "factor must be 1x1");
      n.rows = nb.rows;
      n.cols = nb.cols;
      break;
    }
    case Op::matmul: {
      const Node& nb = need_b();
      require(na.cols == nb.rows, op, shape_str(na.rows, na.cols) + " * " + shape_str(nb.rows, nb.cols));
      n.cols = nb.cols;
      break;
    }
    case Op::transpose:
      n.rows = na.cols;
      n.cols = na.rows;
      break;
    case Op::neg:
    case Op::scale:
    case Op::add_const:
    case Op::softplus:
    case Op::sigmoid:
    case Op::relu:
    case Op::step:
    case Op::tanh:
    case Op::exp:
    case Op::log:
    case Op::pow:
      break;
    case Op::sum:
      n.rows = 1;
      n.cols = 1;
      break;
    case Op::fill:
      require(na.rows == 1 && na.cols == 1, op, "source must be 1x1");
      require(i0 > 0 && i1 > 0, op, "empty fill shape");
      n.rows = i0;
      n.cols = i1;
      break;
    case Op::repeat_cols:
    case Op::tile_cols:
      require(i0 >= 1, op, "repeat count must be positive");
      n.cols = na.cols * i0;
      break;
    case Op::group_sum_cols:
    case Op::block_sum_cols:
      require(i0 >= 1 && na.cols % i0 == 0, op, "column count not divisible by " + std::to_string(i0));
      n.cols = na.cols / i0;
      break;
    case Op::col_slice:
      require(i0 >= 0 && i1 >= 1 && i0 + i1 <= na.cols, op, "column range out of bounds");
      n.cols = i1;
      break;
    case Op::pad_cols:
      require(i0 >= 0 && i0 + na.cols <= i1, op, "padding target too small");
      n.cols = i1;
      break;
    case Op::row_slice:
      require(i0 >= 0 && i1 >= 1 && i0 + i1 <= na.rows, op, "row range out of bounds");
      n.rows = i1;
      break;
    case Op::pad_rows:
      require(i0 >= 0 && i0 + na.rows <= i1, op, "padding target too small");
      n.rows = i1;
      break;
    case Op::batch_matmul: {
      const Node& nb = need_b();
      require(i0 >= 1 && na.rows == i0 * i0, op, "operand rows must be n*n");
      require(nb.rows == na.rows && nb.cols == na.cols, op, "batched operands differ in shape");
      break;
    }
    case Op::batch_transpose:
    case Op::batch_inverse_spd:
      require(i0 >= 1 && na.rows == i0 * i0, op, "operand rows must be n*n");
      break;
    case Op::batch_logdet_spd:
      require(i0 >= 1 && na.rows == i0 * i0, op, "operand rows must be n*n");
      n.rows = 1;
      break;
    case Op::leaf:
    case Op::constant:
      require(false, op, "not constructible through push");
  }
  return append(n);
}

Var operator+(Var a, Var b) { return a.graph().push(Op::add, a, b); }
Var operator-(Var a, Var b) { return a.graph().push(Op::sub, a, b); }
Var operator-(Var a) { return a.graph().push(Op::neg, a); }
Var operator*(double c, Var a) { return a.graph().push(Op::scale, a, {}, c); }
Var operator*(Var a, double c) { return c * a; }
Var operator+(Var a, double c) { return a.graph().push(Op::add_const, a, {}, c); }
Var operator+(double c, Var a) { return a + c; }
Var operator-(double c, Var a) { return (-a) + c; }

Var scale_by(Var s, Var a) { return s.graph().push(Op::scale_by, s, a); }
Var hadamard(Var a, Var b) { return a.graph().push(Op::hadamard, a, b); }
Var matmul(Var a, Var b) { return a.graph().push(Op::matmul, a, b); }
Var transpose(Var a) { return a.graph().push(Op::transpose, a); }
Var softplus(Var a) { return a.graph().push(Op::softplus, a); }
Var sigmoid(Var a) { return a.graph().push(Op::sigmoid, a); }
Var relu(Var a) { return a.graph().push(Op::relu, a); }
Var step(Var a) { return a.graph().push(Op::step, a); }
Var tanh(Var a) { return a.graph().push(Op::tanh, a); }
Var exp(Var a) { return a.graph().push(Op::exp, a); }
Var log(Var a) { return a.graph().push(Op::log, a); }
Var pow(Var a, double p) { return a.graph().push(Op::pow, a, {}, p); }
Var sum(Var a) { return a.graph().push(Op::sum, a); }
Var fill(Var s, Index rows, Index cols) { return s.graph().push(Op::fill, s, {}, 0.0, rows, cols); }
Var repeat_cols(Var a, Index k) { return a.graph().push(Op::repeat_cols, a, {}, 0.0, k); }
Var group_sum_cols(Var a, Index k) { return a.graph().push(Op::group_sum_cols, a, {}, 0.0, k); }
Var tile_cols(Var a, Index k) { return a.graph().push(Op::tile_cols, a, {}, 0.0, k); }
Var block_sum_cols(Var a, Index k) { return a.graph().push(Op::block_sum_cols, a, {}, 0.0, k); }
Var col_slice(Var a, Index start, Index count) { return a.graph().push(Op::col_slice, a, {}, 0.0, start, count); }
Var pad_cols(Var a, Index start, Index total) { return a.graph().push(Op::pad_cols, a, {}, 0.0, start, total); }
Var row_slice(Var a, Index start, Index count) { return a.graph().push(Op::row_slice, a, {}, 0.0, start, count); }
Var pad_rows(Var a, Index start, Index total) { return a.graph().push(Op::pad_rows, a, {}, 0.0, start, total); }
Var batch_matmul(Var a, Var b, Index n) { return a.graph().push(Op::batch_matmul, a, b, 0.0, n); }
Var batch_transpose(Var a, Index n) { return a.graph().push(Op::batch_transpose, a, {}, 0.0, n); }
Var batch_inverse_spd(Var a, Index n) { return a.graph().push(Op::batch_inverse_spd, a, {}, 0.0, n); }
Var batch_logdet_spd(Var a, Index n) { return a.graph().push(Op::batch_logdet_spd, a, {}, 0.0, n); }

Var dot(Var a, Var b) { return sum(hadamard(a, b)); }
Var squared_norm(Var a) { return sum(hadamard(a, a)); }
Var norm(Var a) { return pow(squared_norm(a), 0.5); }

Var col_sums(Var a) { return matmul(a.graph().ones(1, a.rows()), a); }

Var broadcast_cols(Var column, Index cols) {
  if (column.cols() != 1) throw ShapeError("broadcast_cols: operand must be a column vector");
  return cols == 1 ? column : repeat_cols(column, cols);
}

}  // namespace mqf2::ad
