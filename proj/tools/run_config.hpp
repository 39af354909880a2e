#pragma once

// Run configuration: one JSON document with defaults for every key. User
// files and dotted-path overrides may only touch keys that exist.

#include "mqf2/data.hpp"
#include "mqf2/encoder.hpp"
#include "mqf2/metrics.hpp"
#include "mqf2/picnn.hpp"
#include "mqf2/training.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace mqf2::cli {

using Json = nlohmann::ordered_json;

Json default_config();

/// Recursively overlays `user` onto `base`; unknown keys are a ConfigError.
void merge_config(Json& base, const Json& user, const std::string& prefix = "");

/// Sets `a.b.c` from text; the text is read as JSON when it parses, else as a string.
void apply_override(Json& config, const std::string& dotted, const std::string& text);

/// Typed lookup by dotted path with ConfigError on a missing key or wrong type.
template <class T>
T get(const Json& config, const std::string& dotted);

std::uint64_t run_seed(const Json& config);
std::string out_dir(const Json& config);

GpConfig gp_config(const Json& config);
TrainConfig train_config(const Json& config);
MetricConfig metric_config(const Json& config, const std::string& freq);
/// Encoder and PICNN configurations completed from the data set and checked
/// against each other before any computation.
void model_configs(const Json& config, const TimeSeriesDataset& dataset, EncoderConfig& encoder, PicnnConfig& picnn);

}  // namespace mqf2::cli
