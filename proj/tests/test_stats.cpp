#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "sphkde/stats.hpp"
#include "sphkde/util.hpp"

using namespace sphkde;
using stats::TrimRule;

namespace {

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double phi_inverse(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

//! Asymptotic Kolmogorov tail probability P(sqrt(N) D > lambda).
double kolmogorov_tail(double lambda) {
  double sum = 0.0;
  for (int k = 1; k <= 12; ++k)
    sum += (k % 2 == 1 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::min(1.0, std::max(0.0, sum));
}

std::vector<double> normal_draws(std::size_t n, std::uint64_t seed) {
  auto rng = util::make_rng(seed, {1});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = normal(rng);
  return out;
}

}  // namespace

TEST_CASE("trimmed summary reduces to plain moments without trimming") {
  auto s = stats::trimmed_summary({-1.0, 0.0, 1.0}, 0.0);
  CHECK(s.mean == 0.0);
  CHECK(s.rmse == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
  CHECK(s.median == 0.0);
  CHECK(s.n_kept == 3);
}

TEST_CASE("trimming matches a direct recomputation and ignores a gross outlier") {
  auto values = normal_draws(999, 42);
  values.push_back(1e6);

  auto s = stats::trimmed_summary(values, 0.05);
  CHECK(s.n_kept == 950);

  // Brute-force replica: drop the 50 values farthest from the median.
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  double med = 0.5 * (sorted[499] + sorted[500]);
  std::sort(sorted.begin(), sorted.end(), [med](double a, double b) {
    return std::fabs(a - med) < std::fabs(b - med);
  });
  sorted.resize(950);
  double sum = 0.0, sumsq = 0.0;
  for (double v : sorted) {
    sum += v;
    sumsq += v * v;
  }
  CHECK(s.mean == doctest::Approx(sum / 950.0).epsilon(1e-14));
  CHECK(s.rmse == doctest::Approx(std::sqrt(sumsq / 950.0)).epsilon(1e-14));

  // The outlier is gone and the kept spread matches the 5%-trimmed normal
  // scale (about 0.87).
  CHECK(s.mean < 1.0);
  CHECK(s.rmse > 0.80);
  CHECK(s.rmse < 0.94);
}

TEST_CASE("symmetric tail trimming drops equal counts from both ends") {
  std::vector<double> values;
  for (int i = 0; i < 100; ++i) values.push_back(static_cast<double>(i));
  auto s = stats::trimmed_summary(values, 0.10, TrimRule::kSymmetricTails);
  CHECK(s.n_kept == 90);
  // Kept slice is 5..94.
  CHECK(s.mean == doctest::Approx((5.0 + 94.0) / 2.0));
  CHECK(s.median == doctest::Approx(49.5));
}

TEST_CASE("log log fits recover exact power laws") {
  std::vector<std::pair<double, double>> pairs;
  for (int k = 5; k <= 13; ++k) {
    double n = std::pow(2.0, k);
    pairs.push_back({n, 4.0 * std::pow(n, -0.3)});
  }
  auto fit = stats::loglog_fit(pairs, 0.0, -0.25);
  CHECK(fit.slope == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.r_squared >= 1.0 - 1e-12);
  CHECK(fit.n_points == 9);
  CHECK(fit.se_defined);
  // Slope sits far below the reference relative to its tiny standard error.
  CHECK(fit.p_value_onesided < 1e-6);

  // The n_min filter removes corrupted small-n rows without moving the fit.
  auto corrupted = pairs;
  corrupted.insert(corrupted.begin(), {16.0, 123.0});
  auto refit = stats::loglog_fit(corrupted, 32.0, -0.25);
  CHECK(refit.slope == doctest::Approx(fit.slope).epsilon(1e-14));
  CHECK(refit.n_points == 9);
}

TEST_CASE("two point fits are flagged as degenerate") {
  auto fit = stats::loglog_fit({{128.0, 0.5}, {256.0, 0.4}}, 0.0, -0.3);
  CHECK(fit.r_squared == doctest::Approx(1.0));
  CHECK_FALSE(fit.se_defined);
  CHECK(std::isnan(fit.slope_se));
  CHECK(std::isnan(fit.p_value_onesided));
}

TEST_CASE("noisy synthetic slopes are recovered with a calibrated test") {
  const double beta = -0.25;
  int rejections = 0;
  for (int s = 0; s < 100; ++s) {
    auto rng = util::make_rng(7000 + s, {3});
    std::normal_distribution<double> noise(0.0, 0.02);
    std::vector<std::pair<double, double>> pairs;
    for (int k = 0; k < 17; ++k) {
      double ell = 5.0 + 0.5 * k;
      double n = std::pow(2.0, ell);
      double log2_rmse = 1.0 + beta * ell + noise(rng);
      pairs.push_back({n, std::pow(2.0, log2_rmse)});
    }
    auto fit = stats::loglog_fit(pairs, 0.0, beta);
    CHECK(std::fabs(fit.slope - beta) <= 0.02);
    CHECK(fit.r_squared > 0.99);
    if (fit.p_value_onesided < 0.05) ++rejections;
  }
  // Under the null the one-sided test rejects at roughly its nominal level.
  CHECK(rejections <= 15);
}

TEST_CASE("scaling the errors moves only the intercept") {
  std::vector<std::pair<double, double>> pairs;
  auto rng = util::make_rng(11, {5});
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int k = 5; k <= 12; ++k) {
    double n = std::pow(2.0, k);
    pairs.push_back({n, std::pow(n, -0.2) * std::exp(noise(rng))});
  }
  auto base = stats::loglog_fit(pairs, 0.0, -0.2);
  auto scaled = pairs;
  for (auto& [n, r] : scaled) r *= 7.0;
  auto fit = stats::loglog_fit(scaled, 0.0, -0.2);
  CHECK(fit.slope == doctest::Approx(base.slope).epsilon(1e-12));
  CHECK(fit.r_squared == doctest::Approx(base.r_squared).epsilon(1e-12));
  CHECK(fit.slope_se == doctest::Approx(base.slope_se).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(base.intercept + std::log2(7.0)).epsilon(1e-12));
}

TEST_CASE("normality statistic equals the enumerated gap on five points") {
  const std::vector<double> values = {-1.2, -0.4, 0.1, 0.6, 1.8};
  auto rng = util::make_rng(1, {1});
  auto res = stats::lilliefors(values, 10, rng);

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= 5.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / 4.0);
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  double d = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double p = phi((sorted[i] - mean) / sd);
    d = std::max(d, std::max((i + 1.0) / 5.0 - p, p - static_cast<double>(i) / 5.0));
  }
  CHECK(res.statistic == doctest::Approx(d).epsilon(1e-15));
}

TEST_CASE("normal quantiles pass and exponential draws fail the normality test") {
  std::vector<double> quantiles;
  for (int i = 1; i <= 100; ++i) quantiles.push_back(phi_inverse((i - 0.5) / 100.0));
  auto rng = util::make_rng(5, {1});
  auto good = stats::lilliefors(quantiles, 2000, rng);
  CHECK(good.p_value > 0.5);

  auto rng2 = util::make_rng(5, {2});
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> skewed(500);
  for (auto& v : skewed) v = expo(rng2);
  auto bad = stats::lilliefors(skewed, 2000, rng2);
  CHECK(bad.p_value < 0.01);
}

TEST_CASE("bootstrap p values are calibrated under the null") {
  const int reps = 500;
  std::vector<double> pvals;
  double mean_p = 0.0;
  for (int r = 0; r < reps; ++r) {
    auto draws = normal_draws(40, 9000 + r);
    auto rng = util::make_rng(500 + r, {7});
    auto res = stats::lilliefors(draws, 400, rng);
    pvals.push_back(res.p_value);
    mean_p += res.p_value;
  }
  mean_p /= reps;
  CHECK(mean_p > 0.4);
  CHECK(mean_p < 0.6);

  std::sort(pvals.begin(), pvals.end());
  double dist = 0.0;
  for (int i = 0; i < reps; ++i) {
    dist = std::max(dist, std::max((i + 1.0) / reps - pvals[i], pvals[i] - static_cast<double>(i) / reps));
  }
  CHECK(kolmogorov_tail(std::sqrt(static_cast<double>(reps)) * dist) > 0.001);
}

TEST_CASE("bootstrap is deterministic and thread count independent") {
  auto values = normal_draws(60, 77);
  auto rng_a = util::make_rng(3, {1});
  auto rng_b = util::make_rng(3, {1});
  auto one = stats::lilliefors(values, 500, rng_a, 1);
  auto four = stats::lilliefors(values, 500, rng_b, 4);
  CHECK(one.statistic == four.statistic);
  CHECK(one.p_value == four.p_value);
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(stats::trimmed_summary({}, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(stats::trimmed_summary({1.0, 2.0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(stats::trimmed_summary({1.0, 2.0}, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(stats::trimmed_summary({1.0, std::nan("")}, 0.0), std::invalid_argument);

  CHECK_THROWS_AS(stats::loglog_fit({{128.0, 0.5}}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(stats::loglog_fit({{128.0, 0.5}, {256.0, -0.1}}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(stats::loglog_fit({{128.0, 0.5}, {128.0, 0.4}}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(stats::loglog_fit({{128.0, 0.5}, {256.0, 0.4}}, 512.0), std::invalid_argument);

  auto rng = util::make_rng(1, {1});
  CHECK_THROWS_AS(stats::lilliefors({1.0, 2.0, 3.0}, 100, rng), std::invalid_argument);
  CHECK_THROWS_AS(stats::lilliefors({1.0, 2.0, 3.0, 4.0}, 0, rng), std::invalid_argument);
}
