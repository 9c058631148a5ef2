#pragma once

//! Summary statistics for Monte Carlo studies: robust trimmed moments,
//! log-log rate regression with a one-sided slope test, and a parametric
//! bootstrap Kolmogorov-Smirnov (Lilliefors) normality test.

#include <cstddef>
#include <random>
#include <utility>
#include <vector>

namespace sphkde::stats {

//! How the trimmed fraction is selected. kAbsoluteDeviation drops the values
//! farthest from the median in absolute deviation; kSymmetricTails drops an
//! equal count from each end of the sorted sample.
enum class TrimRule { kAbsoluteDeviation, kSymmetricTails };

struct TrimmedSummary {
  double mean = 0.0;
  double rmse = 0.0;  // root mean square of the kept values
  double median = 0.0;
  double trim_fraction = 0.0;
  std::size_t n_kept = 0;
};

//! Drops the trim * M most extreme observations (per the rule), then reports
//! mean, root mean square and median of the remainder. trim = 0 reproduces
//! the plain moments exactly.
TrimmedSummary trimmed_summary(std::vector<double> values, double trim = 0.05,
                               TrimRule rule = TrimRule::kAbsoluteDeviation);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_se = 0.0;          // NaN when se_defined is false
  double p_value_onesided = 0.0;  // H0: slope = beta_ref vs slope < beta_ref
  std::size_t n_points = 0;
  bool se_defined = false;        // false for two-point (zero-residual-df) fits
};

//! Ordinary least squares of log2(rmse) on log2(n) over the pairs with
//! n >= n_min. The one-sided t-test compares the fitted slope against
//! beta_ref. Throws when fewer than two pairs survive the filter or any
//! rmse is nonpositive.
RateFit loglog_fit(const std::vector<std::pair<double, double>>& pairs, double n_min,
                   double beta_ref = 0.0);

struct KsResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

//! Kolmogorov-Smirnov distance between the sample and a normal with the
//! sample's fitted mean and standard deviation; the p-value comes from
//! n_boot parametric-bootstrap replicates that refit the parameters each
//! time. Deterministic for a given rng state and independent of n_threads.
KsResult lilliefors(const std::vector<double>& values, std::size_t n_boot, std::mt19937_64& rng,
                    unsigned n_threads = 1);

}  // namespace sphkde::stats
