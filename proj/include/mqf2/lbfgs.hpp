#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (bracketing phase plus
// cubic-interpolation zoom).

#include <Eigen/Dense>

#include <functional>

namespace mqf2 {

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 200;
  double c1 = 1e-4;
  double c2 = 0.9;
  double gradient_tol = 1e-6;  // stop when ||grad||_inf <= gradient_tol
  int max_line_search = 40;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;  // infinity norm at x
  int iterations = 0;
  bool converged = false;
};

/// f(x, grad) returns the objective and writes its gradient.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& options = {});

}  // namespace mqf2
