#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "spam/error.hpp"
#include "spam/metrics.hpp"

using namespace spam;

TEST(Metrics, ArgmaxTiesGoLow) {
  EXPECT_EQ(argmax(std::vector<double>{0.2, 0.4, 0.4}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{1, 1, 1}), 0u);
}

TEST(Metrics, PerfectOneHot) {
  Matrix p(3, 3);
  const std::vector<std::size_t> y{0, 2, 1};
  for (std::size_t n = 0; n < 3; ++n) p(n, y[n]) = 1.0;
  const auto r = evaluate_probabilities(p, y);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.nll, 0.0);
  EXPECT_EQ(r.brier, 0.0);
  EXPECT_EQ(r.ece, 0.0);
  EXPECT_EQ(r.n, 3u);
}

TEST(Metrics, UniformTenClass) {
  Matrix p(100, 10, 0.1);
  std::vector<std::size_t> y(100);
  for (std::size_t n = 0; n < 100; ++n) y[n] = n % 10;
  const auto r = evaluate_probabilities(p, y);
  EXPECT_NEAR(r.brier, 0.9, 1e-12);
  EXPECT_NEAR(r.accuracy, 0.1, 1e-12);
  EXPECT_NEAR(r.nll, std::log(10.0), 1e-12);
  EXPECT_NEAR(r.ece, 0.0, 1e-12);
}

TEST(Metrics, HandBuiltEce) {
  // Confidences 0.95, 0.95 (one right) land in the last bin; 0.6 (right) and
  // 0.55 (wrong) share bin (8/15, 9/15].
  const std::vector<double> conf{0.95, 0.95, 0.6, 0.55};
  const std::vector<std::uint8_t> ok{1, 0, 1, 0};
  const double want = 0.5 * std::abs(0.5 - 0.95) + 0.5 * std::abs(0.5 - 0.575);
  EXPECT_NEAR(expected_calibration_error(conf, ok), want, 1e-15);
  // 0.6 sits on a bin edge and belongs to (8/15, 9/15]; 0.61 does not.
  EXPECT_NEAR(expected_calibration_error(std::vector<double>{0.6, 0.61}, std::vector<std::uint8_t>{1, 1}),
              0.5 * 0.4 + 0.5 * 0.39, 1e-15);
}

TEST(Metrics, EvaluateMatchesProbabilities) {
  Rng rng(1);
  const Network net = oracle::random_network(rng, {3, 4, 3});
  const Dataset ds = oracle::random_classification(rng, 40, 3, 3);
  const auto r = evaluate(net, Likelihood::categorical(), ds);
  const Matrix f = forward(net, ds.features);
  Matrix p(40, 3);
  std::vector<std::size_t> y(40);
  double nll_sum = 0.0;
  for (std::size_t n = 0; n < 40; ++n) {
    const auto s = softmax(f.row(n));
    std::copy(s.begin(), s.end(), p.row(n).begin());
    y[n] = ds.label(n);
    nll_sum -= std::log(s[y[n]]);
  }
  const auto q = evaluate_probabilities(p, y);
  EXPECT_EQ(r.accuracy, q.accuracy);
  EXPECT_NEAR(r.nll, nll_sum / 40, 1e-12);
  EXPECT_NEAR(r.brier, q.brier, 1e-12);
  EXPECT_NEAR(r.ece, q.ece, 1e-12);
}

TEST(Metrics, GaussianLeavesClassMetricsUndefined) {
  Rng rng(2);
  const Network net = oracle::random_network(rng, {2, 1}, Activation::Identity);
  const auto r = evaluate(net, Likelihood::gaussian(1.0), oracle::random_regression(rng, 5, 2, 1));
  EXPECT_TRUE(std::isfinite(r.nll));
  EXPECT_TRUE(std::isnan(r.accuracy));
}

TEST(Metrics, EmptyDatasetIsError) {
  const Network net(mlp_layers(std::vector<std::size_t>{2, 2}));
  EXPECT_THROW(evaluate(net, Likelihood::categorical(), make_classification(Matrix(0, 2), {}, 2)), StructuralError);
}

TEST(Metrics, CalibratedPredictorHasSmallEce) {
  Rng rng(3);
  const std::size_t n = 10000;
  std::vector<double> conf(n);
  std::vector<std::uint8_t> ok(n);
  for (std::size_t i = 0; i < n; ++i) {
    conf[i] = rng.uniform(0.5, 1.0);
    ok[i] = rng.uniform() < conf[i];
  }
  EXPECT_LE(expected_calibration_error(conf, ok), 0.02);
}

TEST(Metrics, DuplicationInvariance) {
  Rng rng(4);
  const Network net = oracle::random_network(rng, {3, 5, 4});
  const Dataset ds = oracle::random_classification(rng, 37, 3, 4);
  std::vector<std::size_t> rows(74);
  for (std::size_t i = 0; i < 74; ++i) rows[i] = i % 37;
  const auto a = evaluate(net, Likelihood::categorical(), ds);
  const auto b = evaluate(net, Likelihood::categorical(), ds.subset(rows));
  EXPECT_NEAR(a.accuracy, b.accuracy, 1e-15);
  EXPECT_NEAR(a.nll, b.nll, 1e-12);
  EXPECT_NEAR(a.brier, b.brier, 1e-12);
  EXPECT_NEAR(a.ece, b.ece, 1e-12);
}
