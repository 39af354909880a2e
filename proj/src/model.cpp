#include "mqf2/model.hpp"

#include "mqf2/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace mqf2 {

using nlohmann::json;

std::string to_string(Mode mode) { return mode == Mode::energy_score ? "es" : "ml"; }

Mode parse_mode(const std::string& text) {
  if (text == "es" || text == "energy-score" || text == "energy_score") return Mode::energy_score;
  if (text == "ml" || text == "max-likelihood" || text == "max_likelihood") return Mode::max_likelihood;
  throw ConfigError("unknown mode '" + text + "' (expected es or ml)");
}

void QuantileModel::validate() const {
  encoder.config.validate();
  picnn.config.validate();
  if (picnn.config.context_dim != encoder.config.hidden_size) {
    throw ConfigError("picnn.context_dim (" + std::to_string(picnn.config.context_dim) +
                      ") must equal encoder.hidden_size (" + std::to_string(encoder.config.hidden_size) + ")");
  }
}

QuantileModel QuantileModel::init(Mode mode, const EncoderConfig& encoder, const PicnnConfig& picnn,
                                  std::mt19937_64& rng) {
  QuantileModel m;
  m.mode = mode;
  m.encoder = EncoderParams::init(encoder, rng);
  m.picnn = PicnnParams::init(picnn, rng);
  m.validate();
  return m;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json tensor_to_json(const ad::Tensor& t) {
  json values = json::array();
  for (Eigen::Index i = 0; i < t.size(); ++i) values.push_back(format_double(t(i)));
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::move(values)}};
}

ad::Tensor tensor_from_json(const json& j, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw IoError("checkpoint tensor '" + name + "' is truncated");
  ad::Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const std::string s = data[static_cast<std::size_t>(i)].get<std::string>();
    char* end = nullptr;
    t(i) = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw IoError("checkpoint tensor '" + name + "' has a bad entry '" + s + "'");
  }
  return t;
}

}  // namespace

void save_checkpoint(const QuantileModel& model, const std::string& path) {
  const EncoderConfig& e = model.encoder.config;
  const PicnnConfig& p = model.picnn.config;
  json j;
  j["format_version"] = kCheckpointVersion;
  j["mode"] = to_string(model.mode);
  j["freq"] = model.freq;
  j["unconditional"] = model.unconditional;
  j["encoder"] = {{"hidden_size", e.hidden_size},
                  {"num_layers", e.num_layers},
                  {"context_length", e.context_length},
                  {"feature_dim", e.feature_dim}};
  j["picnn"] = {{"input_dim", p.input_dim},
                {"context_dim", p.context_dim},
                {"hidden_width", p.hidden_width},
                {"num_layers", p.num_layers},
                {"gamma_floor", format_double(p.gamma_floor)}};
  json tensors = json::object();
  model.for_each_tensor([&](const std::string& name, const ad::Tensor& t) { tensors[name] = tensor_to_json(t); });
  j["tensors"] = std::move(tensors);

  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

QuantileModel load_checkpoint(const std::string& path, bool validate) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw IoError("checkpoint '" + path + "' is not valid JSON: " + ex.what());
  }
  try {
    if (j.at("format_version").get<int>() != kCheckpointVersion) {
      throw IoError("checkpoint '" + path + "' has unsupported format_version");
    }
    EncoderConfig e;
    const json& je = j.at("encoder");
    e.hidden_size = je.at("hidden_size").get<Eigen::Index>();
    e.num_layers = je.at("num_layers").get<int>();
    e.context_length = je.at("context_length").get<Eigen::Index>();
    e.feature_dim = je.at("feature_dim").get<Eigen::Index>();
    PicnnConfig p;
    const json& jp = j.at("picnn");
    p.input_dim = jp.at("input_dim").get<Eigen::Index>();
    p.context_dim = jp.at("context_dim").get<Eigen::Index>();
    p.hidden_width = jp.at("hidden_width").get<Eigen::Index>();
    p.num_layers = jp.at("num_layers").get<int>();
    p.gamma_floor = std::strtod(jp.at("gamma_floor").get<std::string>().c_str(), nullptr);

    QuantileModel m;
    m.mode = parse_mode(j.at("mode").get<std::string>());
    m.freq = j.value("freq", "");
    m.unconditional = j.value("unconditional", false);
    // Allocate shapes without validation, then fill.
    PicnnConfig shape_cfg = p;
    shape_cfg.gamma_floor = 1.0;
    m.encoder = EncoderParams::zeros(e);
    m.picnn = PicnnParams::zeros(shape_cfg, 2.0);
    m.picnn.config = p;
    const json& tensors = j.at("tensors");
    m.for_each_tensor([&](const std::string& name, ad::Tensor& t) {
      if (!tensors.contains(name)) throw IoError("checkpoint is missing tensor '" + name + "'");
      ad::Tensor v = tensor_from_json(tensors.at(name), name);
      if (v.rows() != t.rows() || v.cols() != t.cols()) throw IoError("checkpoint tensor '" + name + "' has wrong shape");
      t = std::move(v);
    });
    if (validate) m.validate();
    return m;
  } catch (const json::exception& ex) {
    throw IoError("checkpoint '" + path + "' is malformed: " + ex.what());
  }
}

}  // namespace mqf2
