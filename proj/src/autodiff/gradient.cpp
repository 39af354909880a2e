#include "mqf2/autodiff/gradient.hpp"

#include "mqf2/errors.hpp"

namespace mqf2::ad {

namespace {

// Appends the vector-Jacobian products of node `id` given its adjoint `up`
// and hands each operand contribution to `emit(operand_id, contribution)`.
template <class Emit>
void backprop_node(Graph& g, int id, Var up, const std::vector<char>& live, Emit&& emit) {
  const Node node = g.node(id);  // copy: pushes below may reallocate the node list
  Var self(&g, id);
  Var a = node.a >= 0 ? Var(&g, node.a) : Var();
  Var b = node.b >= 0 ? Var(&g, node.b) : Var();
  auto wants = [&](int operand) { return operand >= 0 && live[static_cast<std::size_t>(operand)]; };

  switch (node.op) {
    case Op::leaf:
    case Op::constant:
    case Op::step:
      break;
    case Op::add:
      if (wants(node.a)) emit(node.a, up);
      if (wants(node.b)) emit(node.b, up);
      break;
    case Op::sub:
      if (wants(node.a)) emit(node.a, up);
      if (wants(node.b)) emit(node.b, -up);
      break;
    case Op::neg:
      emit(node.a, -up);
      break;
    case Op::scale:
      emit(node.a, node.c * up);
      break;
    case Op::add_const:
      emit(node.a, up);
      break;
    case Op::scale_by:
      if (wants(node.a)) emit(node.a, sum(hadamard(up, b)));
      if (wants(node.b)) emit(node.b, scale_by(a, up));
      break;
    case Op::hadamard:
      if (wants(node.a)) emit(node.a, hadamard(up, b));
      if (wants(node.b)) emit(node.b, hadamard(up, a));
      break;
    case Op::matmul:
      if (wants(node.a)) emit(node.a, matmul(up, transpose(b)));
      if (wants(node.b)) emit(node.b, matmul(transpose(a), up));
      break;
    case Op::transpose:
      emit(node.a, transpose(up));
      break;
    case Op::softplus:
      emit(node.a, hadamard(up, sigmoid(a)));
      break;
    case Op::sigmoid:
      // y (1 - y)
      emit(node.a, hadamard(up, hadamard(self, 1.0 - self)));
      break;
    case Op::relu:
      emit(node.a, hadamard(up, step(a)));
      break;
    case Op::tanh:
      emit(node.a, hadamard(up, 1.0 - hadamard(self, self)));
      break;
    case Op::exp:
      emit(node.a, hadamard(up, self));
      break;
    case Op::log:
      emit(node.a, hadamard(up, pow(a, -1.0)));
      break;
    case Op::pow:
      if (node.c == 0.0) break;
      if (node.c == 1.0) {
        emit(node.a, up);
      } else if (node.c == 2.0) {
        emit(node.a, hadamard(up, 2.0 * a));
      } else {
        emit(node.a, hadamard(up, node.c * pow(a, node.c - 1.0)));
      }
      break;
    case Op::sum:
      emit(node.a, fill(up, a.rows(), a.cols()));
      break;
    case Op::fill:
      emit(node.a, sum(up));
      break;
    case Op::repeat_cols:
      emit(node.a, group_sum_cols(up, node.i0));
      break;
    case Op::group_sum_cols:
      emit(node.a, repeat_cols(up, node.i0));
      break;
    case Op::tile_cols:
      emit(node.a, block_sum_cols(up, node.i0));
      break;
    case Op::block_sum_cols:
      emit(node.a, tile_cols(up, node.i0));
      break;
    case Op::col_slice:
      emit(node.a, pad_cols(up, node.i0, a.cols()));
      break;
    case Op::pad_cols:
      emit(node.a, col_slice(up, node.i0, a.cols()));
      break;
    case Op::row_slice:
      emit(node.a, pad_rows(up, node.i0, a.rows()));
      break;
    case Op::pad_rows:
      emit(node.a, row_slice(up, node.i0, a.rows()));
      break;
    case Op::batch_matmul:
      if (wants(node.a)) emit(node.a, batch_matmul(up, batch_transpose(b, node.i0), node.i0));
      if (wants(node.b)) emit(node.b, batch_matmul(batch_transpose(a, node.i0), up, node.i0));
      break;
    case Op::batch_transpose:
      emit(node.a, batch_transpose(up, node.i0));
      break;
    case Op::batch_inverse_spd: {
      // Y = S^-1 with S = sym(X): dY = -Y sym(dX) Y  =>  adjoint sym(-Y^T U Y^T)
      const Index n = node.i0;
      Var yt = batch_transpose(self, n);
      Var full = -batch_matmul(batch_matmul(yt, up, n), yt, n);
      emit(node.a, 0.5 * (full + batch_transpose(full, n)));
      break;
    }
    case Op::batch_logdet_spd: {
      // d log det S = tr(S^-1 sym(dX))  =>  adjoint u_b sym(S_b^-1)
      const Index n = node.i0;
      Var inv = batch_inverse_spd(a, n);
      Var sym_inv = 0.5 * (inv + batch_transpose(inv, n));
      emit(node.a, hadamard(sym_inv, matmul(g.ones(n * n, 1), up)));
      break;
    }
  }
}

}  // namespace

std::vector<Var> gradient(Var root, std::span<const Var> wrt) {
  Graph& g = root.graph();
  const int r = root.id();
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("gradient: root must be 1x1, got " + std::to_string(root.rows()) + "x" +
                     std::to_string(root.cols()));
  }
  for (const Var& w : wrt) {
    if (&w.graph() != &g) throw ShapeError("gradient: target from another graph");
  }

  // live[i]: node i (up to the root) depends on some wrt node.
  std::vector<char> live(static_cast<std::size_t>(r + 1), 0);
  for (const Var& w : wrt) {
    if (w.id() <= r) live[static_cast<std::size_t>(w.id())] = 1;
  }
  for (int i = 0; i <= r; ++i) {
    if (live[static_cast<std::size_t>(i)]) continue;
    const Node& n = g.node(i);
    if ((n.a >= 0 && live[static_cast<std::size_t>(n.a)]) || (n.b >= 0 && live[static_cast<std::size_t>(n.b)])) {
      live[static_cast<std::size_t>(i)] = 1;
    }
  }

  std::vector<int> adjoint(static_cast<std::size_t>(r + 1), -1);
  if (live[static_cast<std::size_t>(r)]) adjoint[static_cast<std::size_t>(r)] = g.scalar(1.0).id();

  auto emit = [&](int operand, Var contribution) {
    int& slot = adjoint[static_cast<std::size_t>(operand)];
    slot = slot < 0 ? contribution.id() : (Var(&g, slot) + contribution).id();
  };
  for (int i = r; i >= 0; --i) {
    const int up = adjoint[static_cast<std::size_t>(i)];
    if (up < 0 || !live[static_cast<std::size_t>(i)]) continue;
    backprop_node(g, i, Var(&g, up), live, emit);
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const int adj = w.id() <= r ? adjoint[static_cast<std::size_t>(w.id())] : -1;
    out.push_back(adj >= 0 ? Var(&g, adj) : g.zeros(w.rows(), w.cols()));
  }
  return out;
}

Var gradient(Var root, Var wrt) {
  const Var targets[] = {wrt};
  return gradient(root, targets).front();
}

GradientMap gradient_all(Var root) {
  Graph& g = root.graph();
  std::vector<Var> wrt;
  std::vector<std::string> names;
  for (const LeafInfo& leaf : g.leaves()) {
    if (!leaf.differentiable) continue;
    wrt.emplace_back(&g, leaf.node);
    names.push_back(leaf.name);
  }
  std::vector<Var> grads = gradient(root, wrt);
  GradientMap out;
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], grads[i]);
  return out;
}

Var hessian(Var root, Var x, Index cap) {
  const Index n = x.rows();
  if (x.cols() != 1) throw ShapeError("hessian: target must be an n x 1 vector");
  if (n > cap) throw ShapeError("hessian: dimension " + std::to_string(n) + " exceeds cap " + std::to_string(cap));
  Var grad = gradient(root, x);
  Var h;
  for (Index j = 0; j < n; ++j) {
    Var column = pad_cols(gradient(row_slice(grad, j, 1), x), j, n);
    h = h.valid() ? h + column : column;
  }
  return h;
}

Var batch_hessian(Var gfield, Var x, Index cap) {
  const Index n = x.rows();
  if (gfield.rows() != n || gfield.cols() != x.cols()) throw ShapeError("batch_hessian: field and point shapes differ");
  if (n > cap) {
    throw ShapeError("batch_hessian: dimension " + std::to_string(n) + " exceeds cap " + std::to_string(cap));
  }
  Var out;
  for (Index j = 0; j < n; ++j) {
    Var rows = pad_rows(gradient(sum(row_slice(gfield, j, 1)), x), j * n, n * n);
    out = out.valid() ? out + rows : rows;
  }
  return out;
}

}  // namespace mqf2::ad
