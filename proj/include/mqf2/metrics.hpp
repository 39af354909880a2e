#pragma once

// Forecast evaluation over m series. Targets are n-vectors, sample paths are
// n x S matrices (one path per column), histories are the observed values
// before the forecast window.

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mqf2 {

struct MetricConfig {
  std::vector<double> quantile_levels{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double msis_zeta = 0.05;
  Eigen::Index seasonal_lag = 1;
  double energy_beta = 1.0;
  std::vector<int> wql_steps{1, 5, 10, 15, 20};  // 1-based; steps beyond the horizon are skipped

  void validate() const;
};

/// rho_alpha(z, zhat) = (z - zhat)(alpha - 1{z < zhat}).
double quantile_loss(double z, double zhat, double alpha);

/// Order statistic of rank ceil(alpha S) (1-based) of `samples`.
double empirical_quantile(std::vector<double> samples, double alpha);
/// Rank ceil(alpha S), robust to products such as 0.7 * 10 landing just above 7.
Eigen::Index quantile_rank(double alpha, Eigen::Index count);
/// Per-step empirical quantiles: n x |levels|.
Eigen::MatrixXd empirical_quantiles(const Eigen::MatrixXd& paths, const std::vector<double>& levels);

using Targets = std::vector<Eigen::VectorXd>;
using SamplePaths = std::vector<Eigen::MatrixXd>;

/// Weighted quantile loss per level over all series and steps (ZeroDenominator if sum |z| == 0).
std::vector<double> weighted_quantile_losses(const Targets& targets, const SamplePaths& paths,
                                             const std::vector<double>& levels);
double mean_wql(const Targets& targets, const SamplePaths& paths, const std::vector<double>& levels);
/// Same restricted to horizon step `step` (1-based).
double per_step_wql(const Targets& targets, const SamplePaths& paths, const std::vector<double>& levels, int step);

double sum_crps(const Targets& targets, const SamplePaths& paths);

/// Seasonal error pooled over all series: mean of |x_t - x_{t-f}|.
double seasonal_error(const std::vector<Eigen::VectorXd>& histories, Eigen::Index lag);
double msis(const Targets& targets, const SamplePaths& paths, const std::vector<Eigen::VectorXd>& histories,
            double zeta, Eigen::Index lag);

/// Energy score per series with C, C' the first and second half of the paths
/// and C'' all paths; averaged over series.
double energy_score_metric(const Targets& targets, const SamplePaths& paths, double beta = 1.0);

/// Pearson correlation of the pooled paths after standardizing each series
/// per step (DegenerateVariance on a zero standard deviation).
Eigen::MatrixXd pooled_correlation(const SamplePaths& paths);
double corr_mae(const Eigen::MatrixXd& model_corr, const Eigen::MatrixXd& true_corr);
double corr_mae(const SamplePaths& paths, const Eigen::MatrixXd& true_corr);

struct EvaluationReport {
  double mean_wql = 0.0;
  std::map<int, double> wql_step;
  std::map<double, double> quantile_wql;
  double sum_crps = 0.0;
  std::optional<double> msis;
  double energy_score = 0.0;
  std::optional<double> corr_mae;

  std::string to_json() const;
};

/// All metrics. MSIS is computed only when every history is longer than the
/// seasonal lag; corr_mae only when `true_corr` is given.
EvaluationReport evaluate(const Targets& targets, const SamplePaths& paths,
                          const std::vector<Eigen::VectorXd>& histories, const MetricConfig& config,
                          const Eigen::MatrixXd* true_corr = nullptr);

}  // namespace mqf2
