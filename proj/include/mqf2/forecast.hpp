#pragma once

// Sample-path forecasts for every series of a data set, and their CSV form:
// header "series_id,sample,h1,...,hn", one row per (series, sample).

#include "mqf2/data.hpp"
#include "mqf2/metrics.hpp"
#include "mqf2/model.hpp"
#include "mqf2/quantile_map.hpp"
#include "mqf2/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mqf2 {

struct PathFailure {
  std::size_t series = 0;
  Eigen::Index sample = 0;
  double residual = 0.0;
};

struct Forecast {
  std::vector<std::string> ids;
  SamplePaths paths;                  // per series, n x S in original units
  std::vector<PathFailure> failures;  // inversions that missed the tolerance; those paths hold NaN
};

/// Forecasts the `prediction_length` steps following each series of `history`
/// (for unconditional models, a fresh joint draw per series). Series are
/// processed by up to `threads` workers; series i always uses the sampling
/// sub-stream i, so the result does not depend on the thread count.
Forecast forecast(const QuantileModel& model, const TimeSeriesDataset& history, Eigen::Index samples,
                  std::uint64_t seed, int threads = 1, const InversionOptions& options = {});

/// Same layout from the independent per-step baseline.
Forecast forecast_baseline(const IndependentBaseline& baseline, const TimeSeriesDataset& history,
                           Eigen::Index samples, std::uint64_t seed);

void write_forecasts(const Forecast& forecast, const std::string& path);
/// Rows are grouped by series id in order of first appearance.
Forecast read_forecasts(const std::string& path);

}  // namespace mqf2
