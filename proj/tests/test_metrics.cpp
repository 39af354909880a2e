#include <doctest.h>

#include "mqf2/data.hpp"
#include "mqf2/errors.hpp"
#include "mqf2/metrics.hpp"
#include "mqf2/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace mqf2;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd row(std::initializer_list<double> v) {
  MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) m(0, j++) = x;
  return m;
}

VectorXd one(double v) { return VectorXd::Constant(1, v); }

struct Instance {
  Targets targets;
  SamplePaths paths;
  std::vector<VectorXd> histories;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 5), horizon(1, 6), samples(2, 30);
  std::normal_distribution<double> dist(3.0, 2.0);
  Instance in;
  const int m = count(rng), n = horizon(rng), s = samples(rng);
  for (int i = 0; i < m; ++i) {
    in.targets.push_back(VectorXd::NullaryExpr(n, [&] { return dist(rng); }));
    in.paths.push_back(MatrixXd::NullaryExpr(n, s, [&] { return dist(rng); }));
    in.histories.push_back(VectorXd::NullaryExpr(10, [&] { return dist(rng); }));
  }
  return in;
}

}  // namespace

TEST_CASE("quantile loss by hand") {
  CHECK(quantile_loss(1.5, 1.5, 0.3) == 0.0);
  CHECK(quantile_loss(2.0, 1.0, 0.9) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(quantile_loss(0.0, 1.0, 0.9) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("empirical quantile rank") {
  CHECK(quantile_rank(0.7, 10) == 7);  // 0.7 * 10 is 7.000000000000001 in floating point
  CHECK(quantile_rank(0.1, 10) == 1);
  CHECK(quantile_rank(0.15, 10) == 2);
  CHECK(quantile_rank(0.01, 10) == 1);
  CHECK(quantile_rank(0.999, 10) == 10);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist;
  for (int t = 0; t < 200; ++t) {
    const int s = 1 + t % 37;
    std::vector<double> x(static_cast<std::size_t>(s));
    for (double& v : x) v = dist(rng);
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    const double alpha = std::uniform_real_distribution<double>(0.01, 0.99)(rng);
    // Smallest sample whose empirical CDF reaches alpha.
    std::size_t k = 0;
    while (static_cast<double>(k + 1) / s < alpha - 1e-12) ++k;
    CHECK(empirical_quantile(x, alpha) == sorted[k]);
  }
}

TEST_CASE("mean wQL") {
  Targets z{one(10.0)};
  CHECK(mean_wql(z, {row({8, 8, 8})}, {0.5}) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(mean_wql(z, {row({10, 10})}, MetricConfig{}.quantile_levels) == 0.0);
  CHECK_THROWS_AS(mean_wql({one(0.0)}, {row({1, 2})}, {0.5}), ZeroDenominator);
}

TEST_CASE("sum CRPS") {
  CHECK(sum_crps({one(1.0)}, {row({0, 2})}) == doctest::Approx(0.5).epsilon(1e-15));
  VectorXd z(2);
  z << 1.0, 2.0;
  MatrixXd p(2, 3);
  p << 0, 1, 2, 3, 2, 1;  // every path sums to 3
  CHECK(sum_crps({z}, {p}) == 0.0);
  MatrixXd shuffled(2, 3);
  shuffled << 2, 0, 1, 1, 3, 2;
  CHECK(sum_crps({z}, {p}) == sum_crps({z}, {shuffled}));
}

TEST_CASE("MSIS") {
  // Paths with 25% / 75% quantiles 0 and 2; target 3 above the interval; SE = 1.
  const VectorXd history = (VectorXd(3) << 0.0, 1.0, 2.0).finished();
  CHECK(seasonal_error({history}, 1) == 1.0);
  CHECK(msis({one(3.0)}, {row({0, 0, 2, 2})}, {history}, 0.5, 1) == doctest::Approx(6.0).epsilon(1e-15));
  // Inside the interval: width over SE.
  CHECK(msis({one(1.0)}, {row({0, 0, 2, 2})}, {history}, 0.5, 1) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(seasonal_error({VectorXd::Ones(5)}, 1), ZeroSeasonalError);
  CHECK_THROWS_AS(seasonal_error({VectorXd::Ones(1)}, 1), ZeroSeasonalError);
}

TEST_CASE("energy score loss by hand") {
  CHECK(energy_score_loss(row({0}), row({1}), row({0, 2}), one(1.0), 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(energy_score_loss(row({0}), row({2}), row({1}), one(0.0), 2.0) == doctest::Approx(-1.0).epsilon(1e-15));
  MatrixXd z(2, 1);
  z << 0.5, -1.0;
  CHECK(energy_score_loss(z, z, z, z, 1.0) == 0.0);
  CHECK(energy_score_metric({one(1.0)}, {row({0, 2})}, 1.0) == 0.0);
  CHECK(energy_score_metric({one(1.0)}, {row({1, 1})}, 1.0) == 0.0);
  CHECK_THROWS_AS(energy_score_loss(MatrixXd(1, 0), row({1}), row({1}), one(0.0)), ConfigError);
}

TEST_CASE("energy score symmetries") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist;
  for (int t = 0; t < 50; ++t) {
    MatrixXd c = MatrixXd::NullaryExpr(3, 4, [&] { return dist(rng); });
    MatrixXd cp = MatrixXd::NullaryExpr(3, 5, [&] { return dist(rng); });
    MatrixXd ca = MatrixXd::NullaryExpr(3, 6, [&] { return dist(rng); });
    VectorXd z = VectorXd::NullaryExpr(3, [&] { return dist(rng); });
    const double base = energy_score_loss(c, cp, ca, z);
    CHECK(energy_score_loss(cp, c, ca, z) == doctest::Approx(base).epsilon(1e-13));
    // Reordering samples within a set or permuting coordinates leaves the score unchanged.
    CHECK(energy_score_loss(c.rowwise().reverse(), cp, ca.rowwise().reverse(), z) ==
          doctest::Approx(base).epsilon(1e-13));
    CHECK(energy_score_loss(c.colwise().reverse(), cp.colwise().reverse(), ca.colwise().reverse(),
                            z.reverse()) == doctest::Approx(base).epsilon(1e-13));
  }
}

TEST_CASE("energy score metric shares the loss definition") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist;
  MatrixXd p = MatrixXd::NullaryExpr(4, 10, [&] { return dist(rng); });
  VectorXd z = VectorXd::NullaryExpr(4, [&] { return dist(rng); });
  CHECK(energy_score_metric({z}, {p}) == energy_score_loss(p.leftCols(5), p.rightCols(5), p, z));
}

TEST_CASE("scale invariance of wQL and MSIS") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  const MetricConfig cfg;
  for (int t = 0; t < 100; ++t) {
    Instance in = random_instance(rng);
    const double c = scale(rng);
    Instance scaled = in;
    for (auto& v : scaled.targets) v *= c;
    for (auto& m : scaled.paths) m *= c;
    for (auto& h : scaled.histories) h *= c;
    CHECK(mean_wql(scaled.targets, scaled.paths, cfg.quantile_levels) ==
          doctest::Approx(mean_wql(in.targets, in.paths, cfg.quantile_levels)).epsilon(1e-10));
    CHECK(per_step_wql(scaled.targets, scaled.paths, cfg.quantile_levels, 1) ==
          doctest::Approx(per_step_wql(in.targets, in.paths, cfg.quantile_levels, 1)).epsilon(1e-10));
    CHECK(msis(scaled.targets, scaled.paths, scaled.histories, 0.05, 2) ==
          doctest::Approx(msis(in.targets, in.paths, in.histories, 0.05, 2)).epsilon(1e-10));
  }
}

TEST_CASE("quantile metrics ignore path duplication") {
  std::mt19937_64 rng(9);
  const MetricConfig cfg;
  for (int t = 0; t < 50; ++t) {
    Instance in = random_instance(rng);
    Instance twice = in;
    for (auto& m : twice.paths) {
      MatrixXd d(m.rows(), 2 * m.cols());
      d << m, m;
      m = d;
    }
    CHECK(mean_wql(twice.targets, twice.paths, cfg.quantile_levels) ==
          mean_wql(in.targets, in.paths, cfg.quantile_levels));
    CHECK(msis(twice.targets, twice.paths, twice.histories, 0.05, 1) ==
          msis(in.targets, in.paths, in.histories, 0.05, 1));
  }
}

TEST_CASE("sum CRPS is non-negative") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 1000; ++t) {
    Instance in = random_instance(rng);
    CHECK(sum_crps(in.targets, in.paths) >= -1e-12);
  }
}

TEST_CASE("correlation MAE") {
  GpConfig c;
  const MatrixXd truth = covariance_to_correlation(gp_kernel(c));
  c.num_series = 10000;
  c.seed = 21;
  TimeSeriesDataset draws = gp_synthesize(c);
  // One series holding all draws as its paths.
  MatrixXd paths(24, 10000);
  for (Eigen::Index j = 0; j < 10000; ++j) paths.col(j) = draws.series[static_cast<std::size_t>(j)].target;
  CHECK(corr_mae(SamplePaths{paths}, truth) <= 0.03);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> dist;
  MatrixXd indep = MatrixXd::NullaryExpr(5, 20000, [&] { return dist(rng); });
  CHECK(corr_mae(SamplePaths{indep}, MatrixXd::Identity(5, 5)) <= 0.02);

  const MatrixXd off = truth - MatrixXd::Identity(24, 24);
  CHECK(corr_mae(MatrixXd::Identity(24, 24), truth) == doctest::Approx(off.cwiseAbs().sum() / (24.0 * 24.0)));

  CHECK_THROWS_AS(pooled_correlation({MatrixXd::Ones(3, 4)}), DegenerateVariance);
}

TEST_CASE("evaluation report") {
  Targets z{VectorXd::LinSpaced(6, 1, 6)};
  SamplePaths p{z[0].replicate(1, 4)};
  MetricConfig cfg;
  EvaluationReport r = evaluate(z, p, {VectorXd::LinSpaced(8, 0, 7)}, cfg);
  CHECK(r.mean_wql == 0.0);
  CHECK(r.sum_crps == 0.0);
  CHECK(r.wql_step.count(1) == 1);
  CHECK(r.wql_step.count(5) == 1);
  CHECK(r.wql_step.count(10) == 0);
  REQUIRE(r.msis.has_value());
  const std::string json = r.to_json();
  for (const char* key : {"\"mean_wql\"", "\"wql_step_1\"", "\"wql_step_5\"", "\"sum_crps\"", "\"msis\"",
                          "\"energy_score\""}) {
    CHECK(json.find(key) != std::string::npos);
  }
  CHECK(json.find("corr_mae") == std::string::npos);
  cfg.msis_zeta = 1.5;
  CHECK_THROWS_AS(evaluate(z, p, {}, cfg), ConfigError);
}
