#pragma once

#include "mqf2/autodiff/graph.hpp"

#include <map>
#include <string>
#include <vector>

namespace mqf2::ad {

/// Leaf name -> gradient node (same shape as the leaf).
using GradientMap = std::map<std::string, Var>;

/// Reverse-mode gradient of the 1x1 `root` with respect to each of `wrt`,
/// appended to the graph as new nodes. The result can be differentiated again.
/// Leaves the root does not depend on get an explicit zero node.
std::vector<Var> gradient(Var root, std::span<const Var> wrt);
Var gradient(Var root, Var wrt);

/// Gradient with respect to every differentiable leaf of the graph.
GradientMap gradient_all(Var root);

/// Default upper bound on the dimension of exact Hessians.
inline constexpr Index kDefaultHessianCap = 64;

/// Exact n x n Hessian of the scalar `root` with respect to the n x 1 leaf `x`,
/// assembled from n gradient passes over the components of the gradient.
Var hessian(Var root, Var x, Index cap = kDefaultHessianCap);

/// Batched Hessians of a column-separable gradient field. `g` and `x` are
/// n x B, g = dG/dx for some G = sum_b G_b(x_b). Returns (n*n) x B where
/// column b holds the column-major n x n Hessian of G_b. Row j of each block
/// comes from one gradient pass over row j of g.
Var batch_hessian(Var g, Var x, Index cap = kDefaultHessianCap);

}  // namespace mqf2::ad
