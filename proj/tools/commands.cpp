#include "commands.hpp"

#include "mqf2/errors.hpp"
#include "mqf2/forecast.hpp"
#include "mqf2/quantile_map.hpp"
#include "mqf2/rng.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace mqf2::cli {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

fs::path prepare_out(const Json& config, const std::string& command) {
  const fs::path out = out_dir(config);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
  std::ofstream archive(out / (command + "_config.json"));
  if (!archive) throw IoError("cannot write into '" + out.string() + "'");
  archive << config.dump(2) << '\n';
  return out;
}

std::string data_path(const Json& config) {
  const std::string path = get<std::string>(config, "data.path");
  if (path.empty()) throw ConfigError("data.path is required (use --data)");
  return path;
}

// Series as seen at forecast time: everything but the final horizon, or the
// whole set for unconditional data where each series is itself a target.
TimeSeriesDataset history_of(const TimeSeriesDataset& ds) {
  return ds.unconditional ? ds : split(ds, ds.prediction_length).train;
}

std::string or_default(const std::string& value, const fs::path& fallback) {
  return value.empty() ? fallback.string() : value;
}

std::string truth_path(const Json& config, const TimeSeriesDataset& ds) {
  const std::string explicit_path = get<std::string>(config, "data.truth_corr");
  if (!explicit_path.empty()) return explicit_path;
  if (ds.truth_corr.empty()) return "";
  return (fs::path(data_path(config)).parent_path() / ds.truth_corr).string();
}

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

int thread_cap() {
  const char* env = std::getenv("MQF2_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) throw ConfigError(std::string("MQF2_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<int>(v);
}

int cmd_synth(const Json& config) {
  GpConfig gp = gp_config(config);
  gp.seed = substream(run_seed(config), "data");
  const fs::path out = prepare_out(config, "synth");
  TimeSeriesDataset ds = gp_synthesize(gp);
  ds.truth_corr = "synth_truth_corr.csv";
  const fs::path data = out / "synth.jsonl";
  save_jsonlines(ds, data.string());
  export_corr(covariance_to_correlation(gp_kernel(gp)), (out / ds.truth_corr).string());
  std::cout << "wrote " << ds.series.size() << " series of length " << gp.length << " to " << data.string() << '\n';
  return 0;
}

int cmd_train(const Json& config) {
  const TimeSeriesDataset ds = load_jsonlines(data_path(config));
  EncoderConfig encoder;
  PicnnConfig picnn;
  model_configs(config, ds, encoder, picnn);
  const TrainConfig tc = train_config(config);
  const int every = get<int>(config, "train.checkpoint_every");
  const fs::path out = prepare_out(config, "train");

  const EpochHook hook = [&](int epoch, const QuantileModel& model, double loss) {
    std::cerr << "epoch " << epoch << " loss " << format(loss) << '\n';
    if (every > 0 && epoch % every == 0) {
      save_checkpoint(model, (out / ("model_epoch" + std::to_string(epoch) + ".json")).string());
    }
  };
  TrainResult r = train(history_of(ds), encoder, picnn, tc, hook);
  save_checkpoint(r.model, (out / "model.json").string());
  write_loss_curve(r.loss_curve, (out / "loss.csv").string());
  std::cout << "trained " << to_string(tc.mode) << " model: first epoch " << format(r.loss_curve.front())
            << ", last epoch " << format(r.loss_curve.back()) << '\n';
  if (r.skipped_series > 0) std::cout << "skipped " << r.skipped_series << " series too short for one window\n";
  return 0;
}

int cmd_predict(const Json& config) {
  const TimeSeriesDataset ds = load_jsonlines(data_path(config));
  const Index samples = get<Index>(config, "predict.samples");
  const bool baseline = get<bool>(config, "predict.baseline");
  const std::uint64_t seed = substream(run_seed(config), "sampling");
  const fs::path out = prepare_out(config, "predict");
  const std::string output =
      or_default(get<std::string>(config, "predict.output"), out / (baseline ? "baseline_forecasts.csv" : "forecasts.csv"));
  const TimeSeriesDataset history = history_of(ds);

  Forecast fc;
  if (baseline) {
    fc = forecast_baseline(baseline_independent(history, ds.prediction_length), history, samples, seed);
  } else {
    const std::string ckpt = or_default(get<std::string>(config, "predict.checkpoint"), out / "model.json");
    if (!fs::exists(ckpt)) throw IoError("checkpoint '" + ckpt + "' not found");
    const QuantileModel model = load_checkpoint(ckpt);
    if (model.horizon() != ds.prediction_length) {
      throw ConfigError("checkpoint horizon " + std::to_string(model.horizon()) + " differs from the prediction length " +
                        std::to_string(ds.prediction_length));
    }
    fc = forecast(model, history, samples, seed, thread_cap());
  }
  write_forecasts(fc, output);
  std::cout << "wrote " << fc.paths.size() << " x " << samples << " sample paths to " << output << '\n';
  if (!fc.failures.empty()) {
    for (const PathFailure& f : fc.failures) {
      std::cerr << "series " << fc.ids[f.series] << " sample " << f.sample << ": inversion residual " << format(f.residual)
                << " above tolerance\n";
    }
    throw Error(Error::Kind::numerical, std::to_string(fc.failures.size()) + " sample paths did not converge");
  }
  return 0;
}

int cmd_evaluate(const Json& config) {
  const TimeSeriesDataset ds = load_jsonlines(data_path(config));
  const fs::path out = prepare_out(config, "evaluate");
  const Forecast fc = read_forecasts(or_default(get<std::string>(config, "evaluate.forecasts"), out / "forecasts.csv"));
  const MetricConfig mc = metric_config(config, ds.freq);
  const Index tau = ds.prediction_length;

  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < fc.ids.size(); ++i) by_id[fc.ids[i]] = i;
  Targets targets;
  SamplePaths paths;
  std::vector<VectorXd> histories;
  for (const TimeSeries& s : ds.series) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) throw ConfigError("no forecast for series '" + s.id + "'");
    const MatrixXd& p = fc.paths[it->second];
    if (p.rows() != tau) throw ConfigError("forecast horizon differs from the prediction length");
    if (ds.unconditional) {
      targets.push_back(s.target);
    } else {
      if (s.target.size() <= tau) throw SeriesTooShort({s.id});
      targets.push_back(s.target.tail(tau));
      histories.push_back(s.target.head(s.target.size() - tau));
    }
    paths.push_back(p);
  }

  const std::string truth_file = truth_path(config, ds);
  MatrixXd truth;
  if (!truth_file.empty()) truth = read_corr(truth_file);
  EvaluationReport report = evaluate(targets, paths, histories, mc);
  Json json = Json::parse(report.to_json());
  if (!truth_file.empty()) {
    // A constant forecast step has no correlation; the other scores still stand.
    try {
      const MatrixXd model_corr = pooled_correlation(paths);
      json["corr_mae"] = corr_mae(model_corr, truth);
      export_corr(model_corr, (out / "model_corr.csv").string());
    } catch (const DegenerateVariance& e) {
      std::cerr << "warning: corr_mae not computed: " << e.what() << '\n';
      json["corr_mae"] = nullptr;
    }
  }
  std::ofstream(out / "report.json") << json.dump(2) << '\n';
  std::cout << json.dump(2) << '\n';
  return 0;
}

int cmd_check(const Json& config) {
  const fs::path out = prepare_out(config, "check");
  std::string ckpt = get<std::string>(config, "check.checkpoint");
  if (ckpt.empty()) ckpt = or_default(get<std::string>(config, "predict.checkpoint"), out / "model.json");
  if (!fs::exists(ckpt)) throw IoError("checkpoint '" + ckpt + "' not found");
  const QuantileModel model = load_checkpoint(ckpt, false);
  const Index n = model.horizon(), d = model.picnn.config.context_dim;
  const Index pairs = get<Index>(config, "check.pairs");
  const Index trips = get<Index>(config, "check.round_trip_draws");
  const Index inverse = get<Index>(config, "check.inverse_draws");
  const int contexts = get<int>(config, "check.contexts");
  if (pairs < 1 || trips < 1 || inverse < 1 || contexts < 1) throw ConfigError("check sizes must be >= 1");

  std::mt19937_64 rng(substream(run_seed(config), "check"));
  std::vector<VectorXd> hs;
  for (int k = 0; k < contexts; ++k) hs.push_back(reference_draws(d, 1, rng).col(0));

  Json checks = Json::array();
  bool all = true;
  auto record = [&](const std::string& name, auto&& body) {
    Json entry{{"name", name}};
    try {
      const auto [passed, value] = body();
      entry["passed"] = passed;
      entry["value"] = value;
    } catch (const std::exception& e) {
      entry["passed"] = false;
      entry["error"] = e.what();
    }
    all = all && entry["passed"].get<bool>();
    std::cout << (entry["passed"].get<bool>() ? "PASS " : "FAIL ") << name;
    if (entry.contains("value")) std::cout << " " << format(entry["value"].get<double>());
    if (entry.contains("error")) std::cout << " (" << entry["error"].get<std::string>() << ")";
    std::cout << '\n';
    checks.push_back(entry);
  };

  record("gamma_positive", [&] {
    const double g = model.picnn.effective_gamma();
    return std::pair{g > 0.0, g};
  });
  record("monotonicity", [&] {
    double worst = std::numeric_limits<double>::infinity();
    for (const VectorXd& h : hs) {
      ConditionalMap map(model.picnn, h);
      worst = std::min(worst, monotonicity_margin(map, reference_draws(n, pairs, rng), reference_draws(n, pairs, rng)));
    }
    return std::pair{worst >= -1e-6, worst};
  });
  record("round_trip", [&] {
    double worst = 0.0;
    for (const VectorXd& h : hs) {
      ConditionalMap map(model.picnn, h);
      worst = std::max(worst, round_trip_error(map, reference_draws(n, trips, rng)));
    }
    return std::pair{worst <= 1e-4, worst};
  });
  record("inverse_spd", [&] {
    bool passed = true;
    double worst = std::numeric_limits<double>::infinity();
    for (const VectorXd& h : hs) {
      ConditionalMap map(model.picnn, h);
      const InverseMonotoneReport r = check_inverse_monotone(map, reference_draws(n, inverse, rng));
      passed = passed && r.passed;
      worst = std::min(worst, r.min_eigenvalue);
    }
    return std::pair{passed, worst};
  });

  Json report{{"checkpoint", ckpt}, {"passed", all}, {"checks", checks}};
  std::ofstream(out / "check.json") << report.dump(2) << '\n';
  return all ? 0 : 3;
}

int cmd_report(const Json& config) {
  const fs::path out = out_dir(config);
  std::ostringstream md;
  md << "# Run summary\n\n";
  bool any = false;

  if (std::ifstream loss{out / "loss.csv"}) {
    std::string line, first, last;
    std::getline(loss, line);
    int epochs = 0;
    while (std::getline(loss, line)) {
      if (line.empty()) continue;
      if (epochs++ == 0) first = line;
      last = line;
    }
    auto value = [](const std::string& row) { return row.substr(row.find(',') + 1); };
    if (epochs > 0) {
      md << "## Training\n\n" << epochs << " epochs, mean loss " << value(first) << " -> " << value(last) << "\n\n";
      any = true;
    }
  }
  if (std::ifstream in{out / "report.json"}) {
    const Json r = Json::parse(in, nullptr, false);
    if (r.is_discarded()) throw ParseError((out / "report.json").string(), 1, "invalid JSON");
    md << "## Metrics\n\n| metric | value |\n|---|---|\n";
    for (const auto& [key, v] : r.items()) {
      if (v.is_number()) md << "| " << key << " | " << format(v.get<double>()) << " |\n";
      if (v.is_null()) md << "| " << key << " | n/a |\n";
    }
    md << '\n';
    any = true;
  }
  if (std::ifstream in{out / "check.json"}) {
    const Json r = Json::parse(in, nullptr, false);
    if (r.is_discarded()) throw ParseError((out / "check.json").string(), 1, "invalid JSON");
    md << "## Property checks\n\n";
    for (const Json& c : r.at("checks")) {
      md << "- " << c.at("name").get<std::string>() << ": " << (c.at("passed").get<bool>() ? "pass" : "FAIL") << '\n';
    }
    md << '\n';
    any = true;
  }
  if (!any) throw IoError("nothing to report in '" + out.string() + "' (expected loss.csv, report.json or check.json)");
  std::ofstream(out / "summary.md") << md.str();
  std::cout << md.str();
  return 0;
}

}  // namespace mqf2::cli
