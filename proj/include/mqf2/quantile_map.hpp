#pragma once

// The conditional quantile map q(. | h) = grad_alpha G(., h): forward sampling,
// inversion by L-BFGS and exact log-density through the Hessian of G.

#include "mqf2/lbfgs.hpp"
#include "mqf2/model.hpp"
#include "mqf2/picnn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <random>

namespace mqf2 {

struct InversionOptions {
  double tol_scale = 1e-6;  // residual tolerance is tol_scale * (1 + ||y||_inf)
  int memory = 10;
  int max_iterations = 200;
  double c1 = 1e-4;
  double c2 = 0.9;
};

struct InversionResult {
  Eigen::VectorXd z;
  double residual = 0.0;  // ||g(z) - y||_inf
  int iterations = 0;
};

/// G and its derivatives with the model parameters and the context frozen.
class ConditionalMap {
 public:
  ConditionalMap(const PicnnParams& picnn, const Eigen::VectorXd& h);

  Eigen::Index dim() const { return picnn_.config.input_dim; }
  double gamma() const { return picnn_.effective_gamma(); }

  /// g(alpha) column by column.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& alpha);
  /// Potential values (1 x N) and gradients at the columns of alpha.
  void evaluate(const Eigen::MatrixXd& alpha, Eigen::MatrixXd* values, Eigen::MatrixXd* gradients);
  /// Solves min_z G(z) - z'y. Throws NonConvergence if the residual stays above tolerance.
  InversionResult invert(const Eigen::VectorXd& y, const InversionOptions& options = {});
  /// Hessian of G at z (n x n).
  Eigen::MatrixXd hessian(const Eigen::VectorXd& z);
  /// log phi_n(g(z)) + log det H(z). Throws HessianNotPD.
  double log_density(const Eigen::VectorXd& z);

 private:
  PotentialEvaluator& evaluator(Eigen::Index columns);

  PicnnParams picnn_;
  Eigen::VectorXd h_;
  std::map<Eigen::Index, PotentialEvaluator> by_columns_;
  std::unique_ptr<PotentialEvaluator> hessian_eval_;
};

/// Standard normal reference draws, n x S.
Eigen::MatrixXd reference_draws(Eigen::Index n, Eigen::Index count, std::mt19937_64& rng);

/// z_j = g(alpha_j, h) with alpha_j ~ N(0, I) from a stream seeded by `seed`; n x S.
Eigen::MatrixXd sample_forward(const QuantileModel& model, const Eigen::VectorXd& h, Eigen::Index count,
                               std::uint64_t seed);
/// Forecast sample paths in model units: forward samples for energy-score
/// models, inverted reference draws for likelihood models.
Eigen::MatrixXd sample_paths(const QuantileModel& model, const Eigen::VectorXd& h, Eigen::Index count,
                             std::uint64_t seed, const InversionOptions& options = {});
InversionResult invert(const QuantileModel& model, const Eigen::VectorXd& y, const Eigen::VectorXd& h,
                       const InversionOptions& options = {});
double log_density(const QuantileModel& model, const Eigen::VectorXd& z, const Eigen::VectorXd& h);

struct InverseJacobianCheck {
  double symmetry_error = 0.0;  // max |J - J'|
  double min_eigenvalue = 0.0;  // of (J + J') / 2
  bool passed = false;
};

struct InverseMonotoneReport {
  std::vector<InverseJacobianCheck> draws;
  double max_symmetry_error = 0.0;
  double min_eigenvalue = 0.0;
  bool passed = false;
};

inline constexpr double kInverseSymmetryTol = 1e-3;
inline constexpr double kInverseEigenTol = -1e-6;

/// Central-difference Jacobian of the inverse map at each column of `ys`;
/// passes iff every draw has symmetry error <= 1e-3 and min eigenvalue >= -1e-6.
InverseMonotoneReport check_inverse_monotone(ConditionalMap& map, const Eigen::MatrixXd& ys, double step = 1e-3);
InverseMonotoneReport check_inverse_monotone(const QuantileModel& model, const Eigen::MatrixXd& ys,
                                             const Eigen::VectorXd& h, double step = 1e-3);

/// min over pairs of (g(a1) - g(a2)) . (a1 - a2) for matching columns.
double monotonicity_margin(ConditionalMap& map, const Eigen::MatrixXd& a1, const Eigen::MatrixXd& a2);
/// max over columns of ||invert(g(alpha)) - alpha||_inf.
double round_trip_error(ConditionalMap& map, const Eigen::MatrixXd& alpha, const InversionOptions& options = {});

}  // namespace mqf2
