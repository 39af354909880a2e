#include "mqf2/quantile_map.hpp"

#include "mqf2/autodiff/gradient.hpp"
#include "mqf2/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace mqf2 {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

ConditionalMap::ConditionalMap(const PicnnParams& picnn, const VectorXd& h) : picnn_(picnn), h_(h) {
  if (h.size() != picnn.config.context_dim) {
    throw ShapeError("context has dimension " + std::to_string(h.size()) + ", expected " +
                     std::to_string(picnn.config.context_dim));
  }
}

PotentialEvaluator& ConditionalMap::evaluator(Index columns) {
  auto it = by_columns_.find(columns);
  if (it == by_columns_.end()) {
    it = by_columns_.emplace(columns, PotentialEvaluator(picnn_.config, columns)).first;
    it->second.set_params(picnn_);
    it->second.set_context(h_.replicate(1, columns));
  }
  return it->second;
}

void ConditionalMap::evaluate(const MatrixXd& alpha, MatrixXd* values, MatrixXd* gradients) {
  if (alpha.rows() != dim()) throw ShapeError("quantile map: input has the wrong dimension");
  evaluator(alpha.cols()).evaluate(alpha, values, gradients);
}

MatrixXd ConditionalMap::forward(const MatrixXd& alpha) {
  MatrixXd g;
  evaluate(alpha, nullptr, &g);
  return g;
}

InversionResult ConditionalMap::invert(const VectorXd& y, const InversionOptions& options) {
  if (y.size() != dim()) throw ShapeError("invert: target has the wrong dimension");
  PotentialEvaluator& eval = evaluator(1);
  MatrixXd value, grad;
  Objective objective = [&](const VectorXd& z, VectorXd& g) {
    eval.evaluate(z, &value, &grad);
    g = grad.col(0) - y;
    return value(0, 0) - z.dot(y);
  };
  LbfgsOptions opt;
  opt.memory = options.memory;
  opt.max_iterations = options.max_iterations;
  opt.c1 = options.c1;
  opt.c2 = options.c2;
  opt.gradient_tol = options.tol_scale * (1.0 + y.cwiseAbs().maxCoeff());
  LbfgsResult r = lbfgs_minimize(objective, y, opt);
  if (!r.x.allFinite()) throw NonConvergence(r.gradient_norm, r.iterations);
  if (!r.converged && dim() <= ad::kDefaultHessianCap) {
    // Near the optimum the objective can stop decreasing in floating point
    // before the gradient is small; finish with Newton steps, which only
    // need the gradient to decrease.
    VectorXd z = r.x, g;
    double residual = r.gradient_norm;
    int k = r.iterations;
    for (; k < opt.max_iterations && residual > opt.gradient_tol; ++k) {
      Eigen::LLT<MatrixXd> llt(hessian(z));
      if (llt.info() != Eigen::Success) break;
      objective(z, g);
      const VectorXd next = z - llt.solve(g);
      objective(next, g);
      const double next_residual = g.cwiseAbs().maxCoeff();
      if (!(next_residual < residual)) break;
      z = next;
      residual = next_residual;
    }
    r.iterations = k;
    r.x = z;
    r.gradient_norm = residual;
    r.converged = residual <= opt.gradient_tol;
  }
  if (!r.converged) throw NonConvergence(r.gradient_norm, r.iterations);
  return {std::move(r.x), r.gradient_norm, r.iterations};
}

MatrixXd ConditionalMap::hessian(const VectorXd& z) {
  if (z.size() != dim()) throw ShapeError("hessian: point has the wrong dimension");
  if (!hessian_eval_) {
    hessian_eval_ = std::make_unique<PotentialEvaluator>(picnn_.config, 1, true);
    hessian_eval_->set_params(picnn_);
    hessian_eval_->set_context(h_);
  }
  return hessian_eval_->hessians(z).reshaped(dim(), dim());
}

double ConditionalMap::log_density(const VectorXd& z) {
  const VectorXd y = forward(z).col(0);
  const MatrixXd hess = hessian(z);
  Eigen::LLT<MatrixXd> llt(0.5 * (hess + hess.transpose()));
  if (llt.info() != Eigen::Success) throw HessianNotPD("log_density");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double n = static_cast<double>(dim());
  return -0.5 * y.squaredNorm() - 0.5 * n * std::log(2.0 * std::numbers::pi) + logdet;
}

MatrixXd reference_draws(Index n, Index count, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  MatrixXd out(n, count);
  // Column-major fill keeps draw order equal to path order.
  for (Index j = 0; j < count; ++j)
    for (Index i = 0; i < n; ++i) out(i, j) = dist(rng);
  return out;
}

MatrixXd sample_forward(const QuantileModel& model, const VectorXd& h, Index count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ConditionalMap map(model.picnn, h);
  return map.forward(reference_draws(model.horizon(), count, rng));
}

MatrixXd sample_paths(const QuantileModel& model, const VectorXd& h, Index count, std::uint64_t seed,
                      const InversionOptions& options) {
  if (model.mode == Mode::energy_score) return sample_forward(model, h, count, seed);
  std::mt19937_64 rng(seed);
  const MatrixXd ys = reference_draws(model.horizon(), count, rng);
  ConditionalMap map(model.picnn, h);
  MatrixXd out(ys.rows(), ys.cols());
  for (Index j = 0; j < count; ++j) out.col(j) = map.invert(ys.col(j), options).z;
  return out;
}

InversionResult invert(const QuantileModel& model, const VectorXd& y, const VectorXd& h,
                       const InversionOptions& options) {
  ConditionalMap map(model.picnn, h);
  return map.invert(y, options);
}

double log_density(const QuantileModel& model, const VectorXd& z, const VectorXd& h) {
  ConditionalMap map(model.picnn, h);
  return map.log_density(z);
}

InverseMonotoneReport check_inverse_monotone(ConditionalMap& map, const MatrixXd& ys, double step) {
  // Tight inner tolerance so that solver error stays far below the difference step.
  InversionOptions tight;
  tight.tol_scale = 1e-11;
  tight.max_iterations = 500;
  const Index n = map.dim();
  InverseMonotoneReport report;
  report.passed = true;
  report.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < ys.cols(); ++k) {
    MatrixXd jac(n, n);
    for (Index j = 0; j < n; ++j) {
      VectorXd yp = ys.col(k), ym = ys.col(k);
      yp(j) += step;
      ym(j) -= step;
      jac.col(j) = (map.invert(yp, tight).z - map.invert(ym, tight).z) / (2.0 * step);
    }
    InverseJacobianCheck c;
    c.symmetry_error = (jac - jac.transpose()).cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (jac + jac.transpose()), Eigen::EigenvaluesOnly);
    c.min_eigenvalue = es.eigenvalues().minCoeff();
    c.passed = c.symmetry_error <= kInverseSymmetryTol && c.min_eigenvalue >= kInverseEigenTol;
    report.max_symmetry_error = std::max(report.max_symmetry_error, c.symmetry_error);
    report.min_eigenvalue = std::min(report.min_eigenvalue, c.min_eigenvalue);
    report.passed = report.passed && c.passed;
    report.draws.push_back(c);
  }
  return report;
}

InverseMonotoneReport check_inverse_monotone(const QuantileModel& model, const MatrixXd& ys, const VectorXd& h,
                                             double step) {
  ConditionalMap map(model.picnn, h);
  return check_inverse_monotone(map, ys, step);
}

double monotonicity_margin(ConditionalMap& map, const MatrixXd& a1, const MatrixXd& a2) {
  if (a1.rows() != a2.rows() || a1.cols() != a2.cols()) throw ShapeError("monotonicity_margin: pair shapes differ");
  const MatrixXd g1 = map.forward(a1), g2 = map.forward(a2);
  return ((g1 - g2).cwiseProduct(a1 - a2)).colwise().sum().minCoeff();
}

double round_trip_error(ConditionalMap& map, const MatrixXd& alpha, const InversionOptions& options) {
  const MatrixXd y = map.forward(alpha);
  double worst = 0.0;
  for (Index j = 0; j < alpha.cols(); ++j) {
    worst = std::max(worst, (map.invert(y.col(j), options).z - alpha.col(j)).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace mqf2
