// mqf2: synth | train | predict | evaluate | check | report
//
// Every flag maps onto a key of the run configuration; arbitrary keys can be
// set with dotted paths, e.g. --train.epochs 10 or --picnn.hidden_width=10.

#include "commands.hpp"
#include "run_config.hpp"

#include "mqf2/errors.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

namespace {

using mqf2::cli::Json;

int exit_code(mqf2::Error::Kind kind) {
  switch (kind) {
    case mqf2::Error::Kind::config:
    case mqf2::Error::Kind::usage:
      return 2;
    case mqf2::Error::Kind::numerical:
      return 3;
    case mqf2::Error::Kind::io:
      return 4;
  }
  return 1;
}

// Leftover "--a.b=v" / "--a.b v" arguments become overrides, in order.
std::vector<std::pair<std::string, std::string>> dotted_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.find('.') == std::string::npos) {
      throw mqf2::ConfigError("unexpected argument '" + arg + "'");
    }
    const std::size_t eq = arg.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(arg.substr(2), extras[++i]);
    } else {
      throw mqf2::ConfigError("override '" + arg + "' has no value");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multivariate quantile function forecaster"};
  app.require_subcommand(1);
  app.allow_extras();

  std::string config_path, out, mode, data, checkpoint, forecasts;
  std::optional<long long> seed;
  std::optional<long long> samples, num_series;
  bool baseline = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "run seed");

  std::map<std::string, CLI::App*> commands;
  for (const char* name : {"synth", "train", "predict", "evaluate", "check", "report"}) {
    commands[name] = app.add_subcommand(name)->allow_extras();
  }
  commands["synth"]->description("generate the Gaussian-process data set and its true correlation");
  commands["train"]->description("fit a model and write the checkpoint and loss curve");
  commands["predict"]->description("write sample paths for the final horizon of every series");
  commands["evaluate"]->description("score forecasts against the held-out targets");
  commands["check"]->description("monotonicity, round-trip and inverse-Jacobian checks of a checkpoint");
  commands["report"]->description("summarize the artifacts of an output directory");
  for (auto& [name, sub] : commands) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "run seed");
    sub->add_option("--data", data, "data set (JSON lines)");
    sub->add_option("--mode", mode, "training mode, es or ml");
    sub->add_option("--samples", samples, "sample paths per series");
    sub->add_option("--checkpoint", checkpoint, "model checkpoint");
  }
  commands["synth"]->add_option("--num-series", num_series, "number of series");
  commands["predict"]->add_flag("--baseline", baseline, "use the independent per-step baseline");
  commands["evaluate"]->add_option("--forecasts", forecasts, "forecast CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    Json config = mqf2::cli::default_config();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw mqf2::IoError("cannot read config '" + config_path + "'");
      Json user = Json::parse(in, nullptr, false);
      if (user.is_discarded()) throw mqf2::ConfigError("config '" + config_path + "' is not valid JSON");
      mqf2::cli::merge_config(config, user);
    }
    std::vector<std::string> extras = app.remaining();
    for (auto& [name, sub] : commands) {
      if (sub->parsed()) {
        const auto more = sub->remaining();
        extras.insert(extras.end(), more.begin(), more.end());
      }
    }
    for (const auto& [key, value] : dotted_overrides(extras)) mqf2::cli::apply_override(config, key, value);
    if (!out.empty()) config["out"] = out;
    if (seed) config["seed"] = *seed;
    if (!data.empty()) config["data"]["path"] = data;
    if (!mode.empty()) config["train"]["mode"] = mode;
    if (samples) config["predict"]["samples"] = *samples;
    if (num_series) config["gp"]["num_series"] = *num_series;
    if (!checkpoint.empty()) {
      config["predict"]["checkpoint"] = checkpoint;
      config["check"]["checkpoint"] = checkpoint;
    }
    if (!forecasts.empty()) config["evaluate"]["forecasts"] = forecasts;
    if (baseline) config["predict"]["baseline"] = true;
    mqf2::cli::thread_cap();  // reject a malformed MQF2_THREADS early

    using Command = int (*)(const Json&);
    const std::map<std::string, Command> dispatch{
        {"synth", mqf2::cli::cmd_synth},       {"train", mqf2::cli::cmd_train}, {"predict", mqf2::cli::cmd_predict},
        {"evaluate", mqf2::cli::cmd_evaluate}, {"check", mqf2::cli::cmd_check}, {"report", mqf2::cli::cmd_report}};
    for (auto& [name, sub] : commands) {
      if (sub->parsed()) return dispatch.at(name)(config);
    }
    return 2;
  } catch (const mqf2::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
