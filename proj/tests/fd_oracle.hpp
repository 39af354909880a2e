#pragma once

// Finite-difference oracles used by the tests. Independent of the reverse-mode
// code path: they only ever evaluate forward values.

#include <Eigen/Dense>

#include <cmath>
#include <functional>

namespace mqf2::test {

/// Central-difference gradient of a scalar function of a matrix argument.
inline Eigen::MatrixXd fd_gradient(const std::function<double(const Eigen::MatrixXd&)>& f, Eigen::MatrixXd x,
                                   double h = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x(i);
    x(i) = orig + h;
    const double fp = f(x);
    x(i) = orig - h;
    const double fm = f(x);
    x(i) = orig;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian of a vector map; J(i, j) = d f_i / d x_j.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                   double h = 1e-5) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double orig = x(j);
    x(j) = orig + h;
    const Eigen::VectorXd fp = f(x);
    x(j) = orig - h;
    const Eigen::VectorXd fm = f(x);
    x(j) = orig;
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

/// Central-difference Hessian from function values only.
inline Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                  double h = 1e-4) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd hess(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      auto at = [&](double di, double dj) {
        Eigen::VectorXd y = x;
        y(i) += di;
        y(j) += dj;
        return f(y);
      };
      hess(i, j) = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
    }
  }
  return hess;
}

/// max |a - b| / (|b| + floor), elementwise.
inline double max_rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-4) {
  return ((a - b).array().abs() / (b.array().abs() + floor)).maxCoeff();
}

}  // namespace mqf2::test
