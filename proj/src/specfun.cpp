#include "sphkde/specfun.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

namespace sphkde::specfun {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSeriesXMax = 30.0;

void check_domain(double nu, double x) {
  if (!(nu >= 0.0) || !(x >= 0.0))
    throw std::domain_error("log_scaled_bessel_i: order and argument must be nonnegative");
  if (nu > kBesselMaxOrder)
    throw std::domain_error("log_scaled_bessel_i: order exceeds supported cap");
}

// log of the series remainder S(x) = sum_k (x^2/4)^k / (k! (nu+1)_k), so that
// log(e^{-x} I_nu(x)) = nu*log(x/2) - lgamma(nu+1) + log S(x) - x.
double log_series_remainder(double nu, double x) {
  const double q = 0.25 * x * x;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 500; ++k) {
    term *= q / (k * (nu + k));
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return std::log(sum);
}

double log_scaled_series(double nu, double x) {
  if (x == 0.0) return nu == 0.0 ? 0.0 : -kInf;
  return nu * std::log(0.5 * x) - std::lgamma(nu + 1.0) + log_series_remainder(nu, x) - x;
}

// Large-argument asymptotic series at low order (frac in [0,1)); used only for
// x > 30 where it reaches ~1e-12, to normalize the backward recurrence.
double log_scaled_asym_series(double nu, double x) {
  const double mu4 = 4.0 * nu * nu;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 30; ++k) {
    double num = mu4 - (2.0 * k - 1.0) * (2.0 * k - 1.0);
    double next = -term * num / (k * 8.0 * x);
    if (std::fabs(next) >= std::fabs(term)) break;  // divergence onset
    term = next;
    sum += term;
    if (std::fabs(term) < 1e-18 * std::fabs(sum)) break;
  }
  return std::log(sum) - 0.5 * std::log(2.0 * M_PI * x);
}

// Paper-range branch for 30 < x <= X_switch: Miller backward recurrence over
// orders, normalized at the fractional base order by the asymptotic series.
// Returns (ls_nu, ratio I_{nu+1}/I_nu).
std::pair<double, double> miller(double nu, double x) {
  const double frac = nu - std::floor(nu);
  const int steps_above = static_cast<int>(std::ceil(std::sqrt(nu * nu + 90.0 * x))) + 10;
  const int top = static_cast<int>(std::floor(nu)) + steps_above;

  double y_hi = 0.0;          // y_{m+1}
  double y_lo = 1e-290;       // y_m
  double logscale = 0.0;
  double log_y_nu = 0.0, log_y_nu1 = 0.0;
  bool seen_nu = false, seen_nu1 = false;
  // m runs over orders frac + k; recurrence y_{m-1} = y_{m+1} + (2m/x) y_m.
  for (int k = top; k >= 1; --k) {
    const double m = frac + k;
    double y_prev = y_hi + (2.0 * m / x) * y_lo;
    y_hi = y_lo;
    y_lo = y_prev;
    if (!seen_nu1 && m - 1.0 <= nu + 1.0 + 1e-9 && m - 1.0 >= nu + 1.0 - 1e-9) {
      log_y_nu1 = std::log(y_lo) + logscale;
      seen_nu1 = true;
    }
    if (!seen_nu && std::fabs((m - 1.0) - nu) < 1e-9) {
      log_y_nu = std::log(y_lo) + logscale;
      seen_nu = true;
    }
    if (y_lo > 1e280) {
      y_lo *= 1e-280;
      y_hi *= 1e-280;
      logscale += 280.0 * std::log(10.0);
    }
  }
  const double log_y_base = std::log(y_lo) + logscale;
  const double ls_base = log_scaled_asym_series(frac, x);
  double ls_nu = ls_base + (log_y_nu - log_y_base);
  double ratio = seen_nu1 ? std::exp(log_y_nu1 - log_y_nu) : 0.0;
  return {ls_nu, ratio};
}

double log_scaled_tail(double nu, double x) {
  const double dd = 2.0 * nu + 1.0;
  return std::log1p(-dd * (dd - 2.0) / (8.0 * x)) - 0.5 * std::log(2.0 * M_PI * x);
}

}  // namespace

double log_scaled_bessel_i(double nu, double x) {
  check_domain(nu, x);
  if (x <= kSeriesXMax) return log_scaled_series(nu, x);
  if (x <= kBesselXSwitch) {
    if (nu < 1.0) return log_scaled_asym_series(nu, x);
    return miller(nu, x).first;
  }
  return log_scaled_tail(nu, x);
}

double scaled_bessel_ratio(double nu, double x) {
  check_domain(nu, x);
  if (x == 0.0) return 0.0;
  if (x <= kSeriesXMax)
    return std::exp(log_scaled_series(nu + 1.0, x) - log_scaled_series(nu, x));
  if (x <= kBesselXSwitch) {
    if (nu < 1.0)
      return std::exp(log_scaled_asym_series(nu + 1.0, x) - log_scaled_asym_series(nu, x));
    return miller(nu, x).second;
  }
  return std::exp(log_scaled_tail(nu + 1.0, x) - log_scaled_tail(nu, x));
}

double log_surface_area(int d) {
  if (d < 0) throw std::domain_error("surface_area: d must be >= 0");
  return std::log(2.0) + 0.5 * (d + 1) * std::log(M_PI) - std::lgamma(0.5 * (d + 1));
}

double surface_area(int d) { return std::exp(log_surface_area(d)); }

double log_c_vmf(int d, double kappa) {
  if (d < 1) throw std::domain_error("log_c_vmf: d must be >= 1");
  if (!(kappa >= 0.0)) throw std::domain_error("log_c_vmf: kappa must be nonnegative");
  if (kappa == 0.0) return -log_surface_area(d);
  const double nu = 0.5 * (d - 1);
  if (kappa <= kSeriesXMax) {
    // nu*log(kappa) cancels against the series prefactor analytically, so the
    // kappa -> 0 limit is reached without log cancellation.
    return nu * std::log(2.0) + std::lgamma(nu + 1.0) - 0.5 * (d + 1) * std::log(2.0 * M_PI) -
           log_series_remainder(nu, kappa);
  }
  return nu * std::log(kappa) - 0.5 * (d + 1) * std::log(2.0 * M_PI) - kappa -
         log_scaled_bessel_i(nu, kappa);
}

std::pair<double, double> log_c_vmf_split(int d, double kappa) {
  return {log_c_vmf(d, kappa) + kappa, -1.0};
}

// ---------------------------------------------------------------------------
// Memoized table
// ---------------------------------------------------------------------------

namespace {

constexpr int kKnots = 8193;  // on u = sqrt(x) in [0, 100]

struct TableData {
  std::shared_ptr<const std::vector<double>> val, der;
};

// T(u) = ls(x) - nu*log(x/2) + lgamma(nu+1) + x with x = u^2: the smooth
// series remainder log S; T(0) = 0 and T' = 2u * (I_{nu+1}/I_nu)(x).
TableData build_table(double nu) {
  auto val = std::make_shared<std::vector<double>>(kKnots);
  auto der = std::make_shared<std::vector<double>>(kKnots);
  const double du = 100.0 / (kKnots - 1);
  for (int i = 0; i < kKnots; ++i) {
    const double u = i * du;
    const double x = u * u;
    if (i == 0) {
      (*val)[0] = 0.0;
      (*der)[0] = 0.0;
      continue;
    }
    double T, ratio;
    if (x <= kSeriesXMax) {
      T = log_series_remainder(nu, x);
      ratio = scaled_bessel_ratio(nu, x);
    } else {
      auto [ls, r] = nu < 1.0 ? std::pair<double, double>{log_scaled_asym_series(nu, x),
                                                          std::exp(log_scaled_asym_series(nu + 1.0, x) -
                                                                   log_scaled_asym_series(nu, x))}
                              : miller(nu, x);
      T = ls - nu * std::log(0.5 * x) + std::lgamma(nu + 1.0) + x;
      ratio = r;
    }
    (*val)[i] = T;
    (*der)[i] = 2.0 * u * ratio;
  }
  return {val, der};
}

TableData cached_table(double nu) {
  static std::mutex mu;
  static std::map<long, TableData> cache;  // keyed by 2*nu
  const long key = std::lround(2.0 * nu);
  std::lock_guard<std::mutex> lk(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto data = build_table(nu);
  cache.emplace(key, data);
  return data;
}

}  // namespace

LogCvmf::LogCvmf(int d) : d_(d), nu_(0.5 * (d - 1)) {
  if (d < 1) throw std::domain_error("LogCvmf: d must be >= 1");
  if (nu_ > kBesselMaxOrder) throw std::domain_error("LogCvmf: d exceeds supported cap");
  const_ = nu_ * std::log(2.0) + std::lgamma(nu_ + 1.0) - 0.5 * (d + 1) * std::log(2.0 * M_PI);
  auto data = cached_table(nu_);
  val_ = data.val;
  der_ = data.der;
  du_ = 100.0 / (kKnots - 1);
}

double LogCvmf::operator()(double x) const {
  if (x > kBesselXSwitch) {
    return nu_ * std::log(x) - 0.5 * (d_ + 1) * std::log(2.0 * M_PI) - x - log_scaled_tail(nu_, x);
  }
  // log c = const_ - T(sqrt(x)); cubic Hermite interpolation in u.
  const double u = std::sqrt(x);
  double pos = u / du_;
  int i = static_cast<int>(pos);
  if (i >= kKnots - 1) i = kKnots - 2;
  const double t = pos - i;
  const double v0 = (*val_)[i], v1 = (*val_)[i + 1];
  const double m0 = (*der_)[i] * du_, m1 = (*der_)[i + 1] * du_;
  const double t2 = t * t, t3 = t2 * t;
  const double T = (2 * t3 - 3 * t2 + 1) * v0 + (t3 - 2 * t2 + t) * m0 +
                   (-2 * t3 + 3 * t2) * v1 + (t3 - t2) * m1;
  return const_ - T;
}

}  // namespace sphkde::specfun
