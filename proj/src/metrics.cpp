#include "mqf2/metrics.hpp"

#include "mqf2/errors.hpp"
#include "mqf2/scoring.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace mqf2 {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void MetricConfig::validate() const {
  if (quantile_levels.empty()) throw ConfigError("metrics.quantile_levels must not be empty");
  for (std::size_t i = 0; i < quantile_levels.size(); ++i) {
    const double a = quantile_levels[i];
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("metrics.quantile_levels must lie in (0, 1)");
    if (i > 0 && !(a > quantile_levels[i - 1])) throw ConfigError("metrics.quantile_levels must be increasing");
  }
  if (!(msis_zeta > 0.0 && msis_zeta < 1.0)) throw ConfigError("metrics.msis_zeta must lie in (0, 1)");
  if (seasonal_lag < 1) throw ConfigError("metrics.seasonal_lag must be >= 1");
  if (!(energy_beta > 0.0 && energy_beta < 2.0)) throw ConfigError("metrics.energy_beta must lie in (0, 2)");
  for (int s : wql_steps) {
    if (s < 1) throw ConfigError("metrics.wql_steps are 1-based");
  }
}

double quantile_loss(double z, double zhat, double alpha) { return (z - zhat) * (alpha - (z - zhat < 0.0 ? 1.0 : 0.0)); }

Index quantile_rank(double alpha, Index count) {
  const double x = alpha * static_cast<double>(count);
  const double nearest = std::round(x);
  const double rank = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
  return std::clamp(static_cast<Index>(rank), Index{1}, count);
}

double empirical_quantile(std::vector<double> samples, double alpha) {
  if (samples.empty()) throw ConfigError("empirical_quantile: no samples");
  const auto k = static_cast<std::size_t>(quantile_rank(alpha, static_cast<Index>(samples.size())) - 1);
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(k), samples.end());
  return samples[k];
}

MatrixXd empirical_quantiles(const MatrixXd& paths, const std::vector<double>& levels) {
  const Index n = paths.rows(), s = paths.cols();
  if (s == 0) throw ConfigError("empirical_quantiles: no sample paths");
  MatrixXd out(n, static_cast<Index>(levels.size()));
  std::vector<double> row(static_cast<std::size_t>(s));
  for (Index t = 0; t < n; ++t) {
    for (Index j = 0; j < s; ++j) row[static_cast<std::size_t>(j)] = paths(t, j);
    std::sort(row.begin(), row.end());
    for (std::size_t a = 0; a < levels.size(); ++a) {
      out(t, static_cast<Index>(a)) = row[static_cast<std::size_t>(quantile_rank(levels[a], s) - 1)];
    }
  }
  return out;
}

namespace {

void check_inputs(const Targets& targets, const SamplePaths& paths) {
  if (targets.size() != paths.size()) throw ShapeError("metrics: number of target series and forecasts differ");
  if (targets.empty()) throw ConfigError("metrics: no series");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (paths[i].rows() != targets[i].size()) throw ShapeError("metrics: path length differs from target length");
    if (paths[i].cols() == 0) throw ConfigError("metrics: a series has no sample paths");
  }
}

// Numerator per level and denominator, over steps in [first, last).
void wql_sums(const Targets& targets, const SamplePaths& paths, const std::vector<double>& levels, Index first,
              Index last, std::vector<double>& num, double& den) {
  num.assign(levels.size(), 0.0);
  den = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const MatrixXd q = empirical_quantiles(paths[i], levels);
    for (Index t = first; t < std::min(last, targets[i].size()); ++t) {
      den += std::abs(targets[i](t));
      for (std::size_t a = 0; a < levels.size(); ++a) {
        num[a] += 2.0 * quantile_loss(targets[i](t), q(t, static_cast<Index>(a)), levels[a]);
      }
    }
  }
}

}  // namespace

std::vector<double> weighted_quantile_losses(const Targets& targets, const SamplePaths& paths,
                                             const std::vector<double>& levels) {
  check_inputs(targets, paths);
  std::vector<double> num;
  double den = 0.0;
  wql_sums(targets, paths, levels, 0, std::numeric_limits<Index>::max(), num, den);
  if (!(den > 0.0)) throw ZeroDenominator();
  for (double& v : num) v /= den;
  return num;
}

double mean_wql(const Targets& targets, const SamplePaths& paths, const std::vector<double>& levels) {
  const std::vector<double> per = weighted_quantile_losses(targets, paths, levels);
  double total = 0.0;
  for (double v : per) total += v;
  return total / static_cast<double>(per.size());
}

double per_step_wql(const Targets& targets, const SamplePaths& paths, const std::vector<double>& levels, int step) {
  check_inputs(targets, paths);
  if (step < 1) throw ConfigError("per_step_wql: steps are 1-based");
  std::vector<double> num;
  double den = 0.0;
  wql_sums(targets, paths, levels, step - 1, step, num, den);
  if (!(den > 0.0)) throw ZeroDenominator();
  double total = 0.0;
  for (double v : num) total += v / den;
  return total / static_cast<double>(num.size());
}

double sum_crps(const Targets& targets, const SamplePaths& paths) {
  check_inputs(targets, paths);
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const VectorXd u = paths[i].colwise().sum().transpose();
    const double target = targets[i].sum();
    const auto s = static_cast<double>(u.size());
    double spread = 0.0;
    for (Index j = 0; j < u.size(); ++j) spread += (u.array() - u(j)).abs().sum();
    total += -spread / (2.0 * s * s) + (u.array() - target).abs().sum() / s;
  }
  return total / static_cast<double>(targets.size());
}

double seasonal_error(const std::vector<VectorXd>& histories, Index lag) {
  double total = 0.0;
  Index count = 0;
  for (const VectorXd& h : histories) {
    for (Index t = lag; t < h.size(); ++t) {
      total += std::abs(h(t) - h(t - lag));
      ++count;
    }
  }
  if (count == 0 || !(total > 0.0)) throw ZeroSeasonalError();
  return total / static_cast<double>(count);
}

double msis(const Targets& targets, const SamplePaths& paths, const std::vector<VectorXd>& histories, double zeta,
            Index lag) {
  check_inputs(targets, paths);
  if (histories.size() != targets.size()) throw ShapeError("msis: one history per series is required");
  const double se = seasonal_error(histories, lag);
  const std::vector<double> levels{zeta / 2.0, 1.0 - zeta / 2.0};
  double total = 0.0;
  Index count = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const MatrixXd q = empirical_quantiles(paths[i], levels);
    for (Index t = 0; t < targets[i].size(); ++t) {
      const double lo = q(t, 0), hi = q(t, 1), z = targets[i](t);
      total += hi - lo + (2.0 / zeta) * ((lo - z) * (z < lo ? 1.0 : 0.0) + (z - hi) * (z > hi ? 1.0 : 0.0));
      ++count;
    }
  }
  return total / static_cast<double>(count) / se;
}

double energy_score_metric(const Targets& targets, const SamplePaths& paths, double beta) {
  check_inputs(targets, paths);
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Index half = paths[i].cols() / 2;
    if (half < 1) throw ConfigError("energy score needs at least two sample paths");
    total += energy_score_loss(paths[i].leftCols(half), paths[i].middleCols(half, half), paths[i], targets[i], beta);
  }
  return total / static_cast<double>(targets.size());
}

MatrixXd pooled_correlation(const SamplePaths& paths) {
  if (paths.empty()) throw ConfigError("pooled_correlation: no series");
  const Index n = paths.front().rows();
  Index total = 0;
  for (const MatrixXd& p : paths) {
    if (p.rows() != n) throw ShapeError("pooled_correlation: series have different horizons");
    if (p.cols() < 2) throw ConfigError("pooled_correlation: at least two paths per series are required");
    total += p.cols();
  }
  MatrixXd pooled(n, total);
  Index col = 0;
  for (const MatrixXd& p : paths) {
    const VectorXd mean = p.rowwise().mean();
    MatrixXd centered = p.colwise() - mean;
    const VectorXd sd = (centered.rowwise().squaredNorm() / static_cast<double>(p.cols() - 1)).cwiseSqrt();
    for (Index t = 0; t < n; ++t) {
      if (!(sd(t) > 0.0)) throw DegenerateVariance(static_cast<int>(t + 1));
    }
    pooled.middleCols(col, p.cols()) = sd.cwiseInverse().asDiagonal() * centered;
    col += p.cols();
  }
  const VectorXd mean = pooled.rowwise().mean();
  const MatrixXd centered = pooled.colwise() - mean;
  const MatrixXd cov = centered * centered.transpose();
  const VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  return inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
}

double corr_mae(const MatrixXd& model_corr, const MatrixXd& true_corr) {
  if (model_corr.rows() != true_corr.rows() || model_corr.cols() != true_corr.cols()) {
    throw ShapeError("corr_mae: matrices differ in size");
  }
  return (model_corr - true_corr).cwiseAbs().mean();
}

double corr_mae(const SamplePaths& paths, const MatrixXd& true_corr) {
  return corr_mae(pooled_correlation(paths), true_corr);
}

std::string EvaluationReport::to_json() const {
  nlohmann::ordered_json j;
  j["mean_wql"] = mean_wql;
  for (const auto& [step, v] : wql_step) j["wql_step_" + std::to_string(step)] = v;
  j["sum_crps"] = sum_crps;
  j["msis"] = msis ? nlohmann::ordered_json(*msis) : nlohmann::ordered_json(nullptr);
  j["energy_score"] = energy_score;
  if (corr_mae) j["corr_mae"] = *corr_mae;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [level, v] : quantile_wql) {
    char key[32];
    std::snprintf(key, sizeof key, "%g", level);
    per[key] = v;
  }
  j["quantile_wql"] = std::move(per);
  return j.dump(2);
}

EvaluationReport evaluate(const Targets& targets, const SamplePaths& paths, const std::vector<VectorXd>& histories,
                          const MetricConfig& config, const MatrixXd* true_corr) {
  config.validate();
  EvaluationReport r;
  const std::vector<double> per = weighted_quantile_losses(targets, paths, config.quantile_levels);
  for (std::size_t a = 0; a < per.size(); ++a) {
    r.quantile_wql[config.quantile_levels[a]] = per[a];
    r.mean_wql += per[a] / static_cast<double>(per.size());
  }
  const Index horizon = targets.front().size();
  for (int step : config.wql_steps) {
    if (step <= horizon) r.wql_step[step] = per_step_wql(targets, paths, config.quantile_levels, step);
  }
  r.sum_crps = sum_crps(targets, paths);
  const bool have_history = std::all_of(histories.begin(), histories.end(),
                                        [&](const VectorXd& h) { return h.size() > config.seasonal_lag; });
  if (!histories.empty() && have_history) {
    r.msis = msis(targets, paths, histories, config.msis_zeta, config.seasonal_lag);
  }
  r.energy_score = energy_score_metric(targets, paths, config.energy_beta);
  if (true_corr != nullptr) r.corr_mae = corr_mae(paths, *true_corr);
  return r;
}

}  // namespace mqf2
