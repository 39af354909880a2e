#pragma once

// Differentiable computation graph over dense double matrices.
//
// Nodes are appended in topological order. Gradients are produced as new
// nodes of the same graph (source transformation), so a gradient can itself
// be differentiated: g = dG/dx is a Var, and d(loss(g))/dtheta is another
// call to gradient() on the extended graph.

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mqf2::ad {

using Tensor = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class Op : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  neg,
  scale,      // a * c
  add_const,  // a + c
  scale_by,   // s * a, s is 1x1
  hadamard,
  matmul,
  transpose,
  softplus,
  sigmoid,
  relu,
  step,  // Heaviside, 0 at the origin
  tanh,
  exp,
  log,
  pow,  // elementwise a^c
  sum,  // -> 1x1
  fill,  // 1x1 -> rows x cols
  repeat_cols,     // each column repeated k times consecutively
  group_sum_cols,  // sums consecutive groups of k columns
  tile_cols,       // whole matrix repeated k times side by side
  block_sum_cols,  // sums k side-by-side blocks
  col_slice,
  pad_cols,
  row_slice,
  pad_rows,
  // Column b of an (n*n) x B operand is a column-major n x n matrix. The SPD
  // ops act on the symmetric part (X + X^T) / 2 of each block.
  batch_matmul,
  batch_transpose,
  batch_inverse_spd,
  batch_logdet_spd,  // -> 1 x B
};

const char* op_name(Op op);

struct Node {
  Op op = Op::leaf;
  int a = -1;
  int b = -1;
  Index rows = 0;
  Index cols = 0;
  double c = 0.0;
  Index i0 = 0;  // slice start / repeat count / batch block size
  Index i1 = 0;  // slice length / padded total
  int payload = -1;  // leaf slot or constant slot
};

class Graph;

/// Lightweight handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr && id_ >= 0; }
  Index rows() const;
  Index cols() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

struct LeafInfo {
  std::string name;
  int node = -1;
  bool differentiable = true;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(const std::string& name, Index rows, Index cols, bool differentiable = true);
  Var constant(Tensor value);
  Var scalar(double value);
  Var zeros(Index rows, Index cols);
  Var ones(Index rows, Index cols);

  /// Appends a node; shape is inferred and checked from the operands.
  Var push(Op op, Var a, Var b = {}, double c = 0.0, Index i0 = 0, Index i1 = 0);

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<LeafInfo>& leaves() const { return leaves_; }
  const Tensor& constant_value(int slot) const { return constants_[static_cast<std::size_t>(slot)]; }

  /// Leaf lookup by name; throws UnboundLeaf when absent.
  Var find_leaf(const std::string& name);
  bool has_leaf(const std::string& name) const { return leaf_by_name_.count(name) != 0; }
  /// Node id of a named leaf; throws UnboundLeaf when absent.
  int leaf_node(const std::string& name) const;

 private:
  Var append(Node node);

  std::vector<Node> nodes_;
  std::vector<LeafInfo> leaves_;
  std::vector<Tensor> constants_;
  std::map<std::string, int> leaf_by_name_;
};

// Expression helpers. All operands must belong to the same graph.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
Var operator*(Var a, double c);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(double c, Var a);

Var scale_by(Var s, Var a);
Var hadamard(Var a, Var b);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var step(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var pow(Var a, double p);
Var sum(Var a);
Var fill(Var s, Index rows, Index cols);
Var repeat_cols(Var a, Index k);
Var group_sum_cols(Var a, Index k);
Var tile_cols(Var a, Index k);
Var block_sum_cols(Var a, Index k);
Var col_slice(Var a, Index start, Index count);
Var pad_cols(Var a, Index start, Index total);
Var row_slice(Var a, Index start, Index count);
Var pad_rows(Var a, Index start, Index total);
Var batch_matmul(Var a, Var b, Index n);
Var batch_transpose(Var a, Index n);
Var batch_inverse_spd(Var a, Index n);
Var batch_logdet_spd(Var a, Index n);

// Composites.
Var dot(Var a, Var b);
Var squared_norm(Var a);
Var norm(Var a);
/// 1 x cols row of per-column sums.
Var col_sums(Var a);
/// Broadcasts a column vector across `cols` columns.
Var broadcast_cols(Var column, Index cols);

}  // namespace mqf2::ad
