#include <doctest.h>

#include "mqf2/errors.hpp"
#include "mqf2/model.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace mqf2;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mqf2_test_" + name)).string();
}

QuantileModel small_model(Mode mode, std::uint64_t seed) {
  EncoderConfig e;
  e.hidden_size = 3;
  e.num_layers = 2;
  e.context_length = 4;
  e.feature_dim = 1;
  PicnnConfig p;
  p.input_dim = 2;
  p.context_dim = 3;
  p.hidden_width = 5;
  p.num_layers = 2;
  std::mt19937_64 rng(seed);
  QuantileModel m = QuantileModel::init(mode, e, p, rng);
  // Values that do not have short decimal forms.
  m.for_each_tensor([&](const std::string&, ad::Tensor& t) { t = t.unaryExpr([](double v) { return v / 3.0 + 1e-17; }); });
  return m;
}

}  // namespace

TEST_CASE("mode names") {
  CHECK(parse_mode("es") == Mode::energy_score);
  CHECK(parse_mode("max-likelihood") == Mode::max_likelihood);
  CHECK(to_string(Mode::max_likelihood) == "ml");
  CHECK_THROWS_AS(parse_mode("flow"), ConfigError);
}

TEST_CASE("context size must match the encoder") {
  EncoderConfig e;
  e.hidden_size = 4;
  PicnnConfig p;
  p.context_dim = 5;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(QuantileModel::init(Mode::energy_score, e, p, rng), ConfigError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (Mode mode : {Mode::energy_score, Mode::max_likelihood}) {
    QuantileModel m = small_model(mode, 17);
    m.freq = "H";
    m.unconditional = true;
    const std::string path = temp_path("ckpt.json");
    save_checkpoint(m, path);
    QuantileModel back = load_checkpoint(path);
    CHECK(back.mode == mode);
    CHECK(back.freq == "H");
    CHECK(back.unconditional);
    CHECK(back.picnn.config.gamma_floor == m.picnn.config.gamma_floor);
    std::vector<ad::Tensor> a, b;
    m.for_each_tensor([&](const std::string&, const ad::Tensor& t) { a.push_back(t); });
    back.for_each_tensor([&](const std::string&, const ad::Tensor& t) { b.push_back(t); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    std::remove(path.c_str());
  }
}

TEST_CASE("checkpoint errors") {
  CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist.json")), IoError);
  const std::string path = temp_path("bad.json");
  {
    std::ofstream out(path);
    out << "{\"format_version\": 1}";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  {
    std::ofstream out(path);
    out << "not json";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::remove(path.c_str());
}
