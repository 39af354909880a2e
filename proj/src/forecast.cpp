#include "mqf2/forecast.hpp"

#include "mqf2/encoder.hpp"
#include "mqf2/errors.hpp"
#include "mqf2/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace mqf2 {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Paths of one series in original units; failed inversions are left as NaN.
MatrixXd series_paths(const QuantileModel& model, const TimeSeriesDataset& history, std::size_t i, Index samples,
                      std::uint64_t seed, const InversionOptions& options, std::vector<PathFailure>& failures) {
  const Index n = model.horizon();
  const Index end = history.series[i].target.size();
  const TrainingInstance w = window_at(history, i, end, model.encoder.config.context_length, n);
  const VectorXd h = context_of(model, w);
  const std::uint64_t stream = substream(seed, "sampling", i);
  if (model.mode == Mode::energy_score) return w.scale * sample_forward(model, h, samples, stream);

  std::mt19937_64 rng(stream);
  const MatrixXd ys = reference_draws(n, samples, rng);
  ConditionalMap map(model.picnn, h);
  MatrixXd out(n, samples);
  for (Index j = 0; j < samples; ++j) {
    try {
      out.col(j) = w.scale * map.invert(ys.col(j), options).z;
    } catch (const NonConvergence& e) {
      out.col(j).setConstant(std::numeric_limits<double>::quiet_NaN());
      failures.push_back({i, j, e.residual});
    }
  }
  return out;
}

}  // namespace

Forecast forecast(const QuantileModel& model, const TimeSeriesDataset& history, Index samples, std::uint64_t seed,
                  int threads, const InversionOptions& options) {
  model.validate();
  if (samples < 1) throw ConfigError("forecast: at least one sample path is required");
  if (model.unconditional != history.unconditional) throw ConfigError("model and data set disagree on conditioning");
  if (model.encoder.config.feature_dim != feature_dim_for(history)) {
    throw ConfigError("encoder.feature_dim does not match the data set covariates");
  }
  const std::size_t count = history.series.size();
  Forecast out;
  out.paths.resize(count);
  for (const TimeSeries& s : history.series) out.ids.push_back(s.id);

  std::vector<std::vector<PathFailure>> failures(count);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out.paths[i] = series_paths(model, history, i, samples, seed, options, failures[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  for (auto& f : failures) out.failures.insert(out.failures.end(), f.begin(), f.end());
  return out;
}

Forecast forecast_baseline(const IndependentBaseline& baseline, const TimeSeriesDataset& history, Index samples,
                           std::uint64_t seed) {
  Forecast out;
  for (std::size_t i = 0; i < history.series.size(); ++i) {
    std::mt19937_64 rng(substream(seed, "sampling", i));
    out.ids.push_back(history.series[i].id);
    out.paths.push_back(baseline.sample(samples, rng));
  }
  return out;
}

void write_forecasts(const Forecast& forecast, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  const Index n = forecast.paths.empty() ? 0 : forecast.paths.front().rows();
  out << "series_id,sample";
  for (Index t = 1; t <= n; ++t) out << ",h" << t;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < forecast.paths.size(); ++i) {
    const MatrixXd& p = forecast.paths[i];
    for (Index j = 0; j < p.cols(); ++j) {
      out << forecast.ids[i] << ',' << j;
      for (Index t = 0; t < p.rows(); ++t) {
        std::snprintf(buf, sizeof buf, "%.17g", p(t, j));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

Forecast read_forecasts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("series_id,sample", 0) != 0) {
    throw ParseError(path, 1, "expected header 'series_id,sample,h1,...'");
  }
  const Index n = static_cast<Index>(std::count(line.begin(), line.end(), ',')) - 1;
  if (n < 1) throw ParseError(path, 1, "no horizon columns");
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<VectorXd>> columns;
  Forecast out;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string id, cell;
    std::getline(row, id, ',');
    std::getline(row, cell, ',');  // sample index, implied by row order
    VectorXd v(n);
    Index t = 0;
    while (std::getline(row, cell, ',')) {
      if (t >= n) throw ParseError(path, number, "too many columns");
      try {
        v(t++) = std::stod(cell);
      } catch (const std::exception&) {
        throw ParseError(path, number, "not a number: '" + cell + "'");
      }
    }
    if (t != n) throw ParseError(path, number, "expected " + std::to_string(n) + " horizon values");
    auto [it, fresh] = index.try_emplace(id, columns.size());
    if (fresh) {
      out.ids.push_back(id);
      columns.emplace_back();
    }
    columns[it->second].push_back(v);
  }
  for (const auto& cols : columns) {
    MatrixXd m(n, static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Index>(j)) = cols[j];
    out.paths.push_back(std::move(m));
  }
  return out;
}

}  // namespace mqf2
