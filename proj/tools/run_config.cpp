#include "run_config.hpp"

#include "mqf2/errors.hpp"

#include <sstream>

namespace mqf2::cli {

Json default_config() {
  return Json::parse(R"({
    "seed": 0,
    "out": "out",
    "data": {"path": "", "truth_corr": ""},
    "gp": {
      "num_series": 500, "length": 24,
      "rbf_variance": 0.5, "rbf_lengthscale": 5.0,
      "periodic_variance": 0.5, "periodic_period": 12.0, "periodic_lengthscale": 1.0,
      "noise_jitter": 1e-6
    },
    "encoder": {"hidden_size": 40, "num_layers": 2, "context_length": 24},
    "picnn": {"hidden_width": 40, "num_layers": 5, "gamma_floor": 0.01, "input_dim": null, "context_dim": null},
    "train": {
      "mode": "es", "beta": 1.0, "es_samples": 50, "batch_size": 32, "epochs": 50,
      "batches_per_epoch": 50, "learning_rate": 0.001, "grad_clip": 10.0, "checkpoint_every": 0
    },
    "predict": {"checkpoint": "", "samples": 200, "baseline": false, "output": ""},
    "evaluate": {"forecasts": ""},
    "metrics": {
      "quantile_levels": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
      "msis_zeta": 0.05, "seasonal_lag": null, "energy_beta": 1.0,
      "wql_steps": [1, 5, 10, 15, 20]
    },
    "check": {"checkpoint": "", "pairs": 1000, "round_trip_draws": 100, "inverse_draws": 20, "contexts": 3}
  })");
}

void merge_config(Json& base, const Json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config " + (prefix.empty() ? "document" : "'" + prefix + "'") + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (base[key].is_object()) {
      merge_config(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

void apply_override(Json& config, const std::string& dotted, const std::string& text) {
  Json* node = &config;
  std::stringstream parts(dotted);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(parts, key, '.')) keys.push_back(key);
  if (keys.empty()) throw ConfigError("empty override key");
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!node->is_object() || !node->contains(keys[i])) throw ConfigError("unknown config key '" + dotted + "'");
    node = &(*node)[keys[i]];
  }
  if (node->is_object()) throw ConfigError("'" + dotted + "' is a section, not a value");
  Json value = Json::parse(text, nullptr, false);
  *node = value.is_discarded() ? Json(text) : value;
}

template <class T>
T get(const Json& config, const std::string& dotted) {
  const Json* node = &config;
  std::stringstream parts(dotted);
  std::string key;
  while (std::getline(parts, key, '.')) {
    if (!node->contains(key)) throw ConfigError("missing config key '" + dotted + "'");
    node = &(*node)[key];
  }
  try {
    return node->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + dotted + "' has the wrong type");
  }
}

template int get<int>(const Json&, const std::string&);
template double get<double>(const Json&, const std::string&);
template bool get<bool>(const Json&, const std::string&);
template std::string get<std::string>(const Json&, const std::string&);
template std::uint64_t get<std::uint64_t>(const Json&, const std::string&);
template Eigen::Index get<Eigen::Index>(const Json&, const std::string&);
template std::vector<double> get<std::vector<double>>(const Json&, const std::string&);
template std::vector<int> get<std::vector<int>>(const Json&, const std::string&);

std::uint64_t run_seed(const Json& config) {
  if (!config.at("seed").is_number_integer() || config.at("seed").get<long long>() < 0) {
    throw ConfigError("seed must be a non-negative integer");
  }
  return get<std::uint64_t>(config, "seed");
}

std::string out_dir(const Json& config) { return get<std::string>(config, "out"); }

GpConfig gp_config(const Json& config) {
  GpConfig c;
  c.num_series = get<Eigen::Index>(config, "gp.num_series");
  c.length = get<Eigen::Index>(config, "gp.length");
  c.rbf_variance = get<double>(config, "gp.rbf_variance");
  c.rbf_lengthscale = get<double>(config, "gp.rbf_lengthscale");
  c.periodic_variance = get<double>(config, "gp.periodic_variance");
  c.periodic_period = get<double>(config, "gp.periodic_period");
  c.periodic_lengthscale = get<double>(config, "gp.periodic_lengthscale");
  c.noise_jitter = get<double>(config, "gp.noise_jitter");
  c.validate();
  return c;
}

TrainConfig train_config(const Json& config) {
  TrainConfig c;
  c.mode = parse_mode(get<std::string>(config, "train.mode"));
  c.beta = get<double>(config, "train.beta");
  c.es_samples = get<int>(config, "train.es_samples");
  c.batch_size = get<int>(config, "train.batch_size");
  c.epochs = get<int>(config, "train.epochs");
  c.batches_per_epoch = get<int>(config, "train.batches_per_epoch");
  c.learning_rate = get<double>(config, "train.learning_rate");
  c.grad_clip = get<double>(config, "train.grad_clip");
  c.seed = run_seed(config);
  c.validate();
  if (get<int>(config, "train.checkpoint_every") < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  return c;
}

MetricConfig metric_config(const Json& config, const std::string& freq) {
  MetricConfig c;
  c.quantile_levels = get<std::vector<double>>(config, "metrics.quantile_levels");
  c.msis_zeta = get<double>(config, "metrics.msis_zeta");
  const Json& lag = config.at("metrics").at("seasonal_lag");
  c.seasonal_lag = lag.is_null() ? seasonal_lag(freq) : get<Eigen::Index>(config, "metrics.seasonal_lag");
  c.energy_beta = get<double>(config, "metrics.energy_beta");
  c.wql_steps = get<std::vector<int>>(config, "metrics.wql_steps");
  c.validate();
  return c;
}

void model_configs(const Json& config, const TimeSeriesDataset& dataset, EncoderConfig& encoder, PicnnConfig& picnn) {
  encoder.hidden_size = get<Eigen::Index>(config, "encoder.hidden_size");
  encoder.num_layers = get<int>(config, "encoder.num_layers");
  encoder.context_length = get<Eigen::Index>(config, "encoder.context_length");
  encoder.feature_dim = feature_dim_for(dataset);
  encoder.validate();

  picnn.input_dim = dataset.prediction_length;
  picnn.context_dim = encoder.hidden_size;
  picnn.hidden_width = get<Eigen::Index>(config, "picnn.hidden_width");
  picnn.num_layers = get<int>(config, "picnn.num_layers");
  picnn.gamma_floor = get<double>(config, "picnn.gamma_floor");
  const Json& p = config.at("picnn");
  if (!p.at("input_dim").is_null() && get<Eigen::Index>(config, "picnn.input_dim") != picnn.input_dim) {
    throw ConfigError("picnn.input_dim (" + p.at("input_dim").dump() + ") must equal the prediction length (" +
                      std::to_string(picnn.input_dim) + ")");
  }
  if (!p.at("context_dim").is_null() && get<Eigen::Index>(config, "picnn.context_dim") != picnn.context_dim) {
    throw ConfigError("picnn.context_dim (" + p.at("context_dim").dump() + ") must equal encoder.hidden_size (" +
                      std::to_string(picnn.context_dim) + ")");
  }
  picnn.validate();
}

}  // namespace mqf2::cli
