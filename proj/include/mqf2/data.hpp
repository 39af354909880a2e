#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mqf2 {

using Timestamp = std::chrono::sys_seconds;

/// Parses "YYYY-MM-DD", "YYYY-MM-DD HH:MM:SS" or "YYYY-MM-DDTHH:MM:SS".
Timestamp parse_timestamp(const std::string& text);
std::string format_timestamp(Timestamp t);

/// Start of step `k` after `start` for frequency H, D, W, M, Q or Y.
Timestamp advance(Timestamp start, const std::string& freq, std::int64_t k);

struct TimeSeries {
  std::string id;
  Timestamp start{};
  Eigen::VectorXd target;
  Eigen::MatrixXd dynamic_features;  // features x length, or empty
};

struct TimeSeriesDataset {
  std::vector<TimeSeries> series;
  std::string freq = "H";
  Eigen::Index prediction_length = 1;
  /// Set for the synthetic GP data: each series is one joint draw, so the
  /// whole series is the target and there is no history to condition on.
  bool unconditional = false;
  /// Relative path of the true correlation matrix CSV, when known.
  std::string truth_corr;
  /// Free-form numeric metadata (for example the generating kernel).
  std::vector<std::pair<std::string, double>> attributes;
};

/// Metadata sidecar for `path`: "x.jsonl" -> "x.meta.json".
std::string metadata_path(const std::string& path);

/// JSON lines with "start", "target" and optional "feat_dynamic_real" and
/// "item_id"; frequency and prediction length come from the sidecar.
TimeSeriesDataset load_jsonlines(const std::string& path);
TimeSeriesDataset load_jsonlines(const std::string& path, const std::string& meta_path);
void save_jsonlines(const TimeSeriesDataset& dataset, const std::string& path);

struct DatasetSplit {
  TimeSeriesDataset train;  // all but the last tau points
  TimeSeriesDataset test;   // full series
};

/// Throws SeriesTooShort listing every series with length <= tau.
DatasetSplit split(const TimeSeriesDataset& dataset, Eigen::Index tau);

/// Number of calendar feature rows for a frequency (throws UnknownFrequency).
Eigen::Index calendar_feature_count(const std::string& freq);
/// features x length matrix with entries in [0, 1].
Eigen::MatrixXd calendar_features(const std::string& freq, Timestamp start, Eigen::Index length);
/// Default seasonal lag for MSIS.
Eigen::Index seasonal_lag(const std::string& freq);

struct GpConfig {
  Eigen::Index num_series = 500;
  Eigen::Index length = 24;
  double rbf_variance = 0.5;
  double rbf_lengthscale = 5.0;
  double periodic_variance = 0.5;
  double periodic_period = 12.0;
  double periodic_lengthscale = 1.0;
  double noise_jitter = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

/// K(s, t) = v_r exp(-(s-t)^2 / (2 l_r^2)) + v_p exp(-2 sin^2(pi (s-t) / p) / l_p^2) + jitter [s == t].
Eigen::MatrixXd gp_kernel(const GpConfig& config);
/// Correlation matrix of a covariance matrix.
Eigen::MatrixXd covariance_to_correlation(const Eigen::MatrixXd& cov);
/// Zero-mean draws through a Cholesky factor of the kernel (FactorizationFailure if not SPD).
TimeSeriesDataset gp_synthesize(const GpConfig& config);

/// Unconditional data set of i.i.d. N(mean, stddev^2) vectors of length `length`.
TimeSeriesDataset iid_gaussian(Eigen::Index num_series, Eigen::Index length, double mean, double stddev,
                               std::uint64_t seed);

void export_corr(const Eigen::MatrixXd& matrix, const std::string& path);
Eigen::MatrixXd read_corr(const std::string& path);

}  // namespace mqf2
