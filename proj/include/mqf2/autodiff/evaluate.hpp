#pragma once

#include "mqf2/autodiff/graph.hpp"

#include <initializer_list>
#include <map>
#include <string>
#include <vector>

namespace mqf2::ad {

/// Evaluates a graph under leaf bindings. Holds one value slot per node so
/// that repeated evaluation with same-shaped bindings does not reallocate.
class Evaluator {
 public:
  explicit Evaluator(const Graph& graph);

  void bind(const std::string& name, const Tensor& value);
  void bind(Var leaf, const Tensor& value);

  /// Computes every node the roots depend on.
  void run(std::span<const Var> roots);
  void run(std::initializer_list<Var> roots) { run(std::span<const Var>(roots.begin(), roots.size())); }

  const Tensor& value(Var v) const { return values_[static_cast<std::size_t>(v.id())]; }
  double scalar(Var v) const { return value(v)(0, 0); }

 private:
  void bind_node(int id, const Tensor& value);
  void compute(int id);
  void sync_constants();

  const Graph* graph_;
  std::vector<Tensor> values_;
  std::vector<char> bound_;
  std::vector<char> needed_;
  int constants_synced_ = 0;
};

/// One-shot evaluation of `root`.
Tensor evaluate(const Graph& graph, const std::map<std::string, Tensor>& bindings, Var root);

}  // namespace mqf2::ad
