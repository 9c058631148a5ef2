#include "sphkde/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "sphkde/util.hpp"

namespace sphkde::stats {

namespace {

double median_of_sorted(const std::vector<double>& v) {
  const std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

//! KS distance of a sorted sample against the normal fitted to it (mean and
//! n-1 standard deviation re-estimated from the sample itself).
double ks_to_fitted_normal(std::vector<double>& values) {
  const std::size_t n = values.size();
  double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) return 1.0;  // degenerate sample: maximal distance
  std::sort(values.begin(), values.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double p = normal_cdf((values[i] - mean) / sd);
    d = std::max(d, std::max((i + 1.0) / n - p, p - static_cast<double>(i) / n));
  }
  return d;
}

}  // namespace

TrimmedSummary trimmed_summary(std::vector<double> values, double trim, TrimRule rule) {
  if (values.empty()) throw std::invalid_argument("trimmed_summary: empty sample");
  if (!(trim >= 0.0) || trim >= 1.0)
    throw std::invalid_argument("trimmed_summary: trim fraction must lie in [0, 1)");
  for (double v : values)
    if (std::isnan(v)) throw std::invalid_argument("trimmed_summary: sample contains NaN");

  const std::size_t m = values.size();
  const std::size_t n_kept =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((1.0 - trim) * m - 1e-9)));

  std::sort(values.begin(), values.end());
  std::vector<double> kept;
  if (rule == TrimRule::kAbsoluteDeviation) {
    const double med = median_of_sorted(values);
    // Stable sort on the deviation keeps the order-by-value tie rule
    // deterministic.
    std::stable_sort(values.begin(), values.end(), [med](double a, double b) {
      return std::fabs(a - med) < std::fabs(b - med);
    });
    kept.assign(values.begin(), values.begin() + n_kept);
    std::sort(kept.begin(), kept.end());
  } else {
    const std::size_t n_drop = m - n_kept;
    const std::size_t low = n_drop / 2;
    kept.assign(values.begin() + low, values.begin() + low + n_kept);
  }

  TrimmedSummary out;
  out.trim_fraction = trim;
  out.n_kept = n_kept;
  double sum = 0.0, sumsq = 0.0;
  for (double v : kept) {
    sum += v;
    sumsq += v * v;
  }
  out.mean = sum / static_cast<double>(n_kept);
  out.rmse = std::sqrt(sumsq / static_cast<double>(n_kept));
  out.median = median_of_sorted(kept);
  return out;
}

RateFit loglog_fit(const std::vector<std::pair<double, double>>& pairs, double n_min,
                   double beta_ref) {
  std::vector<double> x, y;
  for (const auto& [n, rmse] : pairs) {
    if (n < n_min) continue;
    if (!(n > 0.0)) throw std::invalid_argument("loglog_fit: sample sizes must be positive");
    if (!(rmse > 0.0))
      throw std::invalid_argument("loglog_fit: rmse values must be positive for the log scale");
    x.push_back(std::log2(n));
    y.push_back(std::log2(rmse));
  }
  const std::size_t k = x.size();
  if (k < 2) throw std::invalid_argument("loglog_fit: need at least two pairs with n >= n_min");

  const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / k;
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (x[i] - xbar) * (x[i] - xbar);
    sxy += (x[i] - xbar) * (y[i] - ybar);
    syy += (y[i] - ybar) * (y[i] - ybar);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("loglog_fit: sample sizes are all equal");

  RateFit fit;
  fit.n_points = k;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  double ssr = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ssr += r * r;
  }
  fit.r_squared = (syy > 0.0) ? std::max(0.0, 1.0 - ssr / syy) : 1.0;

  if (k == 2) {
    fit.se_defined = false;
    fit.slope_se = std::numeric_limits<double>::quiet_NaN();
    fit.p_value_onesided = std::numeric_limits<double>::quiet_NaN();
    return fit;
  }
  fit.se_defined = true;
  const double sigma2 = ssr / static_cast<double>(k - 2);
  fit.slope_se = std::sqrt(sigma2 / sxx);
  if (fit.slope_se > 0.0) {
    const double t = (fit.slope - beta_ref) / fit.slope_se;
    boost::math::students_t dist(static_cast<double>(k - 2));
    fit.p_value_onesided = boost::math::cdf(dist, t);
  } else {
    // Perfect fit: the test degenerates to a sign comparison.
    fit.p_value_onesided = (fit.slope < beta_ref) ? 0.0 : 1.0;
  }
  return fit;
}

KsResult lilliefors(const std::vector<double>& values, std::size_t n_boot, std::mt19937_64& rng,
                    unsigned n_threads) {
  const std::size_t n = values.size();
  if (n < 4) throw std::invalid_argument("lilliefors: need at least four observations");
  if (n_boot == 0) throw std::invalid_argument("lilliefors: n_boot must be positive");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("lilliefors: sample contains non-finite values");

  std::vector<double> work(values);
  KsResult out;
  out.statistic = ks_to_fitted_normal(work);

  // The null distribution of the statistic is location-scale free, so the
  // bootstrap draws standard normals and refits, one derived stream per
  // replicate for thread-count independence.
  const std::uint64_t base = rng();
  std::vector<std::uint8_t> exceed(n_boot, 0);
  util::parallel_for(n_boot, n_threads, [&](std::size_t b) {
    auto sub = util::make_rng(base, {b});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> draw(n);
    for (auto& v : draw) v = normal(sub);
    exceed[b] = ks_to_fitted_normal(draw) >= out.statistic ? 1 : 0;
  });
  std::size_t count = 0;
  for (auto e : exceed) count += e;
  out.p_value = (1.0 + static_cast<double>(count)) / (static_cast<double>(n_boot) + 1.0);
  return out;
}

}  // namespace sphkde::stats
