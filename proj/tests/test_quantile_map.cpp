#include <doctest.h>

#include "fd_oracle.hpp"
#include "mqf2/errors.hpp"
#include "mqf2/quantile_map.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mqf2;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PicnnConfig config(Eigen::Index n, Eigen::Index d = 2) {
  PicnnConfig c;
  c.input_dim = n;
  c.context_dim = d;
  c.hidden_width = 6;
  c.num_layers = 2;
  return c;
}

// Fan-in scaled weights with random biases and gamma, so the map is far from
// the identity while |g| stays in a realistic range.
PicnnParams random_params(const PicnnConfig& c, std::mt19937_64& rng) {
  PicnnParams p = PicnnParams::init(c, rng);
  std::normal_distribution<double> dist(0.0, 0.5);
  p.for_each_tensor([&](const std::string& name, ad::Tensor& t) {
    const bool bias = name.ends_with(".b") || name.ends_with("b_a") || name.ends_with("b_v") ||
                      name.ends_with("embed.b") || name.ends_with("raw_gamma");
    if (bias) t = MatrixXd::NullaryExpr(t.rows(), t.cols(), [&] { return dist(rng); });
  });
  return p;
}

VectorXd randn(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  return VectorXd::NullaryExpr(n, [&] { return dist(rng); });
}

QuantileModel wrap(const PicnnParams& p, Mode mode = Mode::energy_score) {
  QuantileModel m;
  m.mode = mode;
  EncoderConfig e;
  e.hidden_size = p.config.context_dim;
  e.context_length = 1;
  m.encoder = EncoderParams::zeros(e);
  m.picnn = p;
  return m;
}

// G(z) = softplus(softplus(z)) + z^2 / 2 with n = 1, built from explicit
// weights: the first hidden unit is softplus(z), the second wraps it once
// more and the output reads it out with unit weight.
PicnnParams nested_softplus() {
  PicnnConfig c = config(1, 1);
  c.hidden_width = 1;
  PicnnParams p = PicnnParams::zeros(c, 1.0);
  p.layers[0].w_a(0, 0) = 1.0;
  p.layers[0].b_a(0) = 1.0;
  for (std::size_t i : {1, 2}) {
    p.layers[i].w_v(0, 0) = inverse_softplus(1.0);
    p.layers[i].b_v(0) = 1.0;
  }
  return p;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double nested_softplus_grad(double z) { return z + sigmoid(std::log1p(std::exp(z))) * sigmoid(z); }

}  // namespace

TEST_CASE("zero-weight map is the identity") {
  PicnnParams p = PicnnParams::zeros(config(2), 1.0);
  QuantileModel m = wrap(p);
  const VectorXd h = VectorXd::Constant(2, 0.3);

  std::mt19937_64 rng(99);
  const MatrixXd draws = reference_draws(2, 50, rng);
  const MatrixXd samples = sample_forward(m, h, 50, 99);
  CHECK((samples - draws).cwiseAbs().maxCoeff() <= 1e-14);

  VectorXd y(2);
  y << 1.5, -0.25;
  CHECK((invert(m, y, h).z - y).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK(log_density(m, VectorXd::Zero(2), h) == doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
  CHECK(log_density(m, VectorXd::Zero(2), h) == doctest::Approx(-1.837877).epsilon(1e-6));
  VectorXd z(2);
  z << 1.0, 0.0;
  CHECK(log_density(m, z, h) == doctest::Approx(-std::log(2.0 * std::numbers::pi) - 0.5).epsilon(1e-12));

  InverseMonotoneReport rep = check_inverse_monotone(m, reference_draws(2, 3, rng), h);
  CHECK(rep.passed);
  CHECK(rep.max_symmetry_error <= 1e-8);
  CHECK(rep.min_eigenvalue == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("sampling is deterministic per seed") {
  std::mt19937_64 rng(3);
  QuantileModel m = wrap(random_params(config(3), rng));
  const VectorXd h = randn(2, rng);
  CHECK(sample_forward(m, h, 20, 5) == sample_forward(m, h, 20, 5));
  CHECK(sample_forward(m, h, 20, 5) != sample_forward(m, h, 20, 6));
}

TEST_CASE("invert recovers a closed-form preimage") {
  PicnnParams p = nested_softplus();
  const VectorXd h = VectorXd::Zero(1);
  for (double z : {-2.0, 0.0, 1.0, 3.0}) {
    CHECK(grad_potential(p, VectorXd::Constant(1, z), h)(0) == doctest::Approx(nested_softplus_grad(z)).epsilon(1e-12));
  }
  QuantileModel m = wrap(p);
  for (double z : {-2.0, 0.0, 1.0, 3.0}) {
    const double y = nested_softplus_grad(z);
    InversionResult r = invert(m, VectorXd::Constant(1, y), h);
    CHECK(r.residual <= 1e-6 * (1.0 + std::abs(y)));
    // g' >= 1, so the preimage error is bounded by the residual.
    CHECK(std::abs(r.z(0) - z) <= r.residual + 1e-15);
  }
}

TEST_CASE("round trip over random models") {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index n = 1 + t % 4;
    PicnnParams p = random_params(config(n), rng);
    ConditionalMap map(p, randn(2, rng));
    worst = std::max(worst, round_trip_error(map, reference_draws(n, 1, rng)));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("inversion failure carries the residual") {
  std::mt19937_64 rng(8);
  PicnnParams p = random_params(config(3), rng);
  ConditionalMap map(p, randn(2, rng));
  InversionOptions opt;
  opt.max_iterations = 1;
  opt.tol_scale = 1e-14;
  try {
    map.invert(VectorXd::Constant(3, 4.0), opt);
    FAIL("expected NonConvergence");
  } catch (const NonConvergence& e) {
    CHECK(e.residual > 0.0);
    CHECK(e.iterations == 1);
  }
}

TEST_CASE("log density matches a finite-difference change of variables") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    PicnnParams p = random_params(config(3), rng);
    const VectorXd h = randn(2, rng), z = randn(3, rng);
    auto g = [&](const VectorXd& x) { return grad_potential(p, x, h); };
    const MatrixXd jac = test::fd_jacobian(g, z, 1e-5);
    const double logdet_fd = std::log(std::abs(jac.determinant()));
    const VectorXd y = g(z);
    const double expect = -0.5 * y.squaredNorm() - 1.5 * std::log(2.0 * std::numbers::pi) + logdet_fd;
    ConditionalMap map(p, h);
    const MatrixXd hess = map.hessian(z);
    worst = std::max(worst, std::abs(std::log(hess.determinant()) - logdet_fd) / (std::abs(logdet_fd) + 1e-4));
    CHECK(std::abs(map.log_density(z) - expect) <= 1e-4 * std::abs(expect));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("one-dimensional density integrates to one") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 5; ++t) {
    PicnnParams p = random_params(config(1), rng);
    ConditionalMap map(p, randn(2, rng));
    // Integrate between the images of reference quantiles at +-8.
    const double lo = map.invert(VectorXd::Constant(1, -8.0)).z(0);
    const double hi = map.invert(VectorXd::Constant(1, 8.0)).z(0);
    const int steps = 4000;
    const double dz = (hi - lo) / steps;
    double total = 0.0;
    for (int i = 0; i <= steps; ++i) {
      const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
      total += w * std::exp(map.log_density(VectorXd::Constant(1, lo + i * dz)));
    }
    total *= dz;
    CHECK(total >= 0.99);
    CHECK(total <= 1.01);
  }
}

TEST_CASE("inverse Jacobian is symmetric positive semidefinite") {
  std::mt19937_64 rng(17);
  for (Eigen::Index n : {2, 3}) {
    PicnnParams p = random_params(config(n), rng);
    ConditionalMap map(p, randn(2, rng));
    InverseMonotoneReport rep = check_inverse_monotone(map, reference_draws(n, 20, rng));
    CHECK(rep.passed);
    CHECK(rep.draws.size() == 20);
  }
}

TEST_CASE("a non-positive gamma is reported, not silent") {
  std::mt19937_64 rng(19);
  PicnnParams p = PicnnParams::zeros(config(2), 1.0);
  // Test-only: push the effective gamma below zero through the floor.
  p.config.gamma_floor = -2.0;
  ConditionalMap map(p, VectorXd::Zero(2));
  CHECK(map.gamma() < 0.0);
  CHECK_THROWS_AS(map.log_density(VectorXd::Zero(2)), HessianNotPD);
}

TEST_CASE("monotone forward map") {
  std::mt19937_64 rng(23);
  PicnnParams p = random_params(config(3), rng);
  ConditionalMap map(p, randn(2, rng));
  const MatrixXd a1 = reference_draws(3, 1000, rng), a2 = reference_draws(3, 1000, rng);
  CHECK(monotonicity_margin(map, a1, a2) >= 0.0);
}
