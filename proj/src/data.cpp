#include "mqf2/data.hpp"

#include "mqf2/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace mqf2 {

namespace chr = std::chrono;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

Timestamp parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = ' ';
  const int fields = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
  const bool date_only = fields == 3;
  if (!date_only && !(fields == 7 && (sep == ' ' || sep == 'T'))) {
    throw ConfigError("bad timestamp '" + text + "'");
  }
  const chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(mo)}, chr::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59) {
    throw ConfigError("bad timestamp '" + text + "'");
  }
  return chr::sys_days{ymd} + chr::hours{h} + chr::minutes{mi} + chr::seconds{s};
}

std::string format_timestamp(Timestamp t) {
  const auto day = chr::floor<chr::days>(t);
  const chr::year_month_day ymd{day};
  const chr::hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

namespace {

Timestamp add_months(Timestamp t, std::int64_t k) {
  const auto day = chr::floor<chr::days>(t);
  const chr::year_month_day ymd{day};
  const chr::year_month ym = chr::year_month{ymd.year(), ymd.month()} + chr::months{k};
  // Clamp to the month's last day (Jan 31 + 1 month -> Feb 28/29).
  const chr::year_month_day_last last{ym.year(), chr::month_day_last{ym.month()}};
  const chr::day dd = std::min(ymd.day(), last.day());
  return chr::sys_days{chr::year_month_day{ym.year(), ym.month(), dd}} + (t - day);
}

}  // namespace

Timestamp advance(Timestamp start, const std::string& freq, std::int64_t k) {
  if (freq == "H") return start + chr::hours{k};
  if (freq == "D") return start + chr::days{k};
  if (freq == "W") return start + chr::weeks{k};
  if (freq == "M") return add_months(start, k);
  if (freq == "Q") return add_months(start, 3 * k);
  if (freq == "Y") return add_months(start, 12 * k);
  throw UnknownFrequency(freq);
}

std::string metadata_path(const std::string& path) {
  std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + ".meta.json")).string();
}

TimeSeriesDataset load_jsonlines(const std::string& path) { return load_jsonlines(path, metadata_path(path)); }

TimeSeriesDataset load_jsonlines(const std::string& path, const std::string& meta_path) {
  TimeSeriesDataset ds;
  {
    std::ifstream meta(meta_path);
    if (!meta) throw MissingMetadata("no metadata file '" + meta_path + "'");
    json m;
    try {
      meta >> m;
    } catch (const json::exception& ex) {
      throw MissingMetadata("metadata '" + meta_path + "' is not valid JSON: " + ex.what());
    }
    if (!m.contains("freq")) throw MissingMetadata("'freq' in " + meta_path);
    if (!m.contains("prediction_length")) throw MissingMetadata("'prediction_length' in " + meta_path);
    ds.freq = m.at("freq").get<std::string>();
    ds.prediction_length = m.at("prediction_length").get<Index>();
    ds.unconditional = m.value("unconditional", false);
    ds.truth_corr = m.value("truth_corr", "");
    if (m.contains("attributes")) {
      for (const auto& [k, v] : m.at("attributes").items()) ds.attributes.emplace_back(k, v.get<double>());
    }
    calendar_feature_count(ds.freq);  // rejects unknown frequencies early
    if (ds.prediction_length < 1) throw ConfigError("prediction_length must be >= 1");
  }

  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    TimeSeries ts;
    try {
      const json j = json::parse(line);
      ts.id = j.contains("item_id") ? (j["item_id"].is_string() ? j["item_id"].get<std::string>() : j["item_id"].dump())
                                    : std::to_string(ds.series.size());
      ts.start = parse_timestamp(j.at("start").get<std::string>());
      const auto target = j.at("target").get<std::vector<double>>();
      if (target.empty()) throw ParseError(path, lineno, "empty target");
      ts.target = Eigen::Map<const VectorXd>(target.data(), static_cast<Index>(target.size()));
      if (j.contains("feat_dynamic_real")) {
        const auto rows = j.at("feat_dynamic_real").get<std::vector<std::vector<double>>>();
        ts.dynamic_features.resize(static_cast<Index>(rows.size()), ts.target.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (rows[r].size() != target.size()) {
            throw LengthMismatch("line " + std::to_string(lineno) + ": covariate row " + std::to_string(r) + " has " +
                                 std::to_string(rows[r].size()) + " entries, target has " +
                                 std::to_string(target.size()));
          }
          ts.dynamic_features.row(static_cast<Index>(r)) =
              Eigen::Map<const Eigen::RowVectorXd>(rows[r].data(), static_cast<Index>(rows[r].size()));
        }
      }
    } catch (const json::exception& ex) {
      throw ParseError(path, lineno, ex.what());
    } catch (const ConfigError& ex) {
      throw ParseError(path, lineno, ex.what());
    }
    ds.series.push_back(std::move(ts));
  }
  return ds;
}

void save_jsonlines(const TimeSeriesDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  for (const TimeSeries& ts : dataset.series) {
    json j;
    j["item_id"] = ts.id;
    j["start"] = format_timestamp(ts.start);
    j["target"] = std::vector<double>(ts.target.data(), ts.target.data() + ts.target.size());
    if (ts.dynamic_features.size() > 0) {
      json rows = json::array();
      for (Index r = 0; r < ts.dynamic_features.rows(); ++r) {
        const Eigen::RowVectorXd row = ts.dynamic_features.row(r);
        rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
      }
      j["feat_dynamic_real"] = std::move(rows);
    }
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing dataset '" + path + "'");

  json m;
  m["freq"] = dataset.freq;
  m["prediction_length"] = dataset.prediction_length;
  if (dataset.unconditional) m["unconditional"] = true;
  if (!dataset.truth_corr.empty()) m["truth_corr"] = dataset.truth_corr;
  if (!dataset.attributes.empty()) {
    json attrs = json::object();
    for (const auto& [k, v] : dataset.attributes) attrs[k] = v;
    m["attributes"] = std::move(attrs);
  }
  std::ofstream meta(metadata_path(path));
  if (!meta) throw IoError("cannot write metadata for '" + path + "'");
  meta << m.dump(1) << '\n';
}

DatasetSplit split(const TimeSeriesDataset& dataset, Index tau) {
  if (tau < 1) throw ConfigError("split: tau must be >= 1");
  std::vector<std::string> short_ids;
  for (const TimeSeries& ts : dataset.series) {
    if (ts.target.size() <= tau) short_ids.push_back(ts.id);
  }
  if (!short_ids.empty()) throw SeriesTooShort(short_ids);
  DatasetSplit out{dataset, dataset};
  for (TimeSeries& ts : out.train.series) {
    const Index keep = ts.target.size() - tau;
    ts.target.conservativeResize(keep);
    if (ts.dynamic_features.size() > 0) ts.dynamic_features.conservativeResize(Eigen::NoChange, keep);
  }
  return out;
}

Index calendar_feature_count(const std::string& freq) {
  if (freq == "H" || freq == "D" || freq == "W") return 2;
  if (freq == "M" || freq == "Q") return 1;
  if (freq == "Y") return 0;
  throw UnknownFrequency(freq);
}

MatrixXd calendar_features(const std::string& freq, Timestamp start, Index length) {
  MatrixXd out(calendar_feature_count(freq), length);
  for (Index k = 0; k < length; ++k) {
    const Timestamp t = advance(start, freq, k);
    const auto day = chr::floor<chr::days>(t);
    const chr::year_month_day ymd{day};
    const double hour = static_cast<double>(chr::hh_mm_ss{t - day}.hours().count());
    const double dow = static_cast<double>(chr::weekday{day}.iso_encoding() - 1);  // Monday = 0
    const double dom = static_cast<double>(static_cast<unsigned>(ymd.day()) - 1);
    const double month = static_cast<double>(static_cast<unsigned>(ymd.month()) - 1);
    if (freq == "H") {
      out(0, k) = hour / 23.0;
      out(1, k) = dow / 6.0;
    } else if (freq == "D") {
      out(0, k) = dow / 6.0;
      out(1, k) = dom / 30.0;
    } else if (freq == "W") {
      out(0, k) = month / 11.0;
      out(1, k) = dom / 30.0;
    } else if (freq == "M") {
      out(0, k) = month / 11.0;
    } else if (freq == "Q") {
      out(0, k) = std::floor(month / 3.0) / 3.0;
    }
  }
  return out;
}

Index seasonal_lag(const std::string& freq) {
  if (freq == "H") return 24;
  if (freq == "D") return 7;
  if (freq == "W") return 52;
  if (freq == "M") return 12;
  if (freq == "Q") return 4;
  if (freq == "Y") return 1;
  throw UnknownFrequency(freq);
}

void GpConfig::validate() const {
  if (num_series < 1) throw ConfigError("gp.num_series must be >= 1");
  if (length < 1) throw ConfigError("gp.length must be >= 1");
  if (!(rbf_variance > 0 && rbf_lengthscale > 0 && periodic_variance > 0 && periodic_period > 0 &&
        periodic_lengthscale > 0)) {
    throw ConfigError("gp kernel scales must be > 0");
  }
  if (!(noise_jitter >= 1e-8)) throw ConfigError("gp.noise_jitter must be >= 1e-8");
}

MatrixXd gp_kernel(const GpConfig& c) {
  c.validate();
  MatrixXd k(c.length, c.length);
  for (Index s = 0; s < c.length; ++s) {
    for (Index t = 0; t < c.length; ++t) {
      const double d = static_cast<double>(s - t);
      const double sn = std::sin(std::numbers::pi * d / c.periodic_period);
      k(s, t) = c.rbf_variance * std::exp(-d * d / (2.0 * c.rbf_lengthscale * c.rbf_lengthscale)) +
                c.periodic_variance * std::exp(-2.0 * sn * sn / (c.periodic_lengthscale * c.periodic_lengthscale)) +
                (s == t ? c.noise_jitter : 0.0);
    }
  }
  return k;
}

MatrixXd covariance_to_correlation(const MatrixXd& cov) {
  const VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  return inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
}

TimeSeriesDataset gp_synthesize(const GpConfig& c) {
  const MatrixXd k = gp_kernel(c);
  Eigen::LLT<MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw FactorizationFailure("GP kernel is not positive definite; raise the jitter");
  const MatrixXd l = llt.matrixL();

  TimeSeriesDataset ds;
  ds.freq = "H";
  ds.prediction_length = c.length;
  ds.unconditional = true;
  ds.attributes = {{"rbf_variance", c.rbf_variance},
                   {"rbf_lengthscale", c.rbf_lengthscale},
                   {"periodic_variance", c.periodic_variance},
                   {"periodic_period", c.periodic_period},
                   {"periodic_lengthscale", c.periodic_lengthscale},
                   {"noise_jitter", c.noise_jitter}};
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> dist;
  const Timestamp start = parse_timestamp("2020-01-01 00:00:00");
  for (Index i = 0; i < c.num_series; ++i) {
    VectorXd eps(c.length);
    for (Index t = 0; t < c.length; ++t) eps(t) = dist(rng);
    ds.series.push_back({std::to_string(i), start, l * eps, MatrixXd()});
  }
  return ds;
}

TimeSeriesDataset iid_gaussian(Index num_series, Index length, double mean, double stddev, std::uint64_t seed) {
  if (num_series < 1 || length < 1) throw ConfigError("iid_gaussian: need at least one series of length >= 1");
  if (!(stddev > 0.0)) throw ConfigError("iid_gaussian: stddev must be > 0");
  TimeSeriesDataset ds;
  ds.freq = "H";
  ds.prediction_length = length;
  ds.unconditional = true;
  ds.attributes = {{"mean", mean}, {"stddev", stddev}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(mean, stddev);
  const Timestamp start = parse_timestamp("2020-01-01 00:00:00");
  for (Index i = 0; i < num_series; ++i) {
    ds.series.push_back({std::to_string(i), start, VectorXd::NullaryExpr(length, [&] { return dist(rng); }), MatrixXd()});
  }
  return ds;
}

void export_corr(const MatrixXd& matrix, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  char buf[32];
  for (Index i = 0; i < matrix.rows(); ++i) {
    for (Index j = 0; j < matrix.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", matrix(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

MatrixXd read_corr(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("'" + path + "': bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw IoError("'" + path + "': ragged rows");
    rows.push_back(std::move(row));
  }
  MatrixXd m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

}  // namespace mqf2
