#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "sphkde/specfun.hpp"

using namespace sphkde::specfun;

namespace {

// Independent oracle: I_0 power series in long double.
long double i0_series(long double x) {
  long double q = 0.25L * x * x, term = 1.0L, sum = 1.0L;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<long double>(k) * k);
    sum += term;
    if (term < 1e-22L * sum) break;
  }
  return sum;
}

// Independent oracle: half-integer closed form I_{1/2}(x) = sqrt(2/(pi x)) sinh x,
// evaluated as a log to avoid overflow.
double log_scaled_i_half(double x) {
  // log(e^-x sqrt(2/(pi x)) sinh x) = -0.5 log(2 pi x) + log1p(-e^{-2x})
  return -0.5 * std::log(2.0 * M_PI * x) + std::log1p(-std::exp(-2.0 * x));
}

}  // namespace

TEST_CASE("scaled Bessel identity and closed-form values") {
  CHECK(log_scaled_bessel_i(0.0, 0.0) == 0.0);
  CHECK(log_scaled_bessel_i(1.0, 0.0) == -std::numeric_limits<double>::infinity());

  // half-integer oracle across all three branches
  for (double x : {0.5, 2.0, 17.0, 31.0, 250.0, 9000.0}) {
    CHECK(log_scaled_bessel_i(0.5, x) == doctest::Approx(log_scaled_i_half(x)).epsilon(1e-11));
  }
  // frozen value computed from the closed form
  CHECK(log_scaled_bessel_i(0.5, 2.0) == doctest::Approx(-1.2839975703105313).epsilon(1e-12));
  // beyond the switch the expansion at nu=0.5 is exact up to e^{-2x}
  CHECK(log_scaled_bessel_i(0.5, 1e4) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI * 1e4)).epsilon(1e-14));

  // I_{3/2}(x) = sqrt(2/(pi x)) (cosh x - sinh x / x)
  for (double x : {1.0, 8.0, 40.0, 500.0}) {
    double oracle = -0.5 * std::log(2.0 * M_PI * x) +
                    std::log((1.0 + std::exp(-2.0 * x)) - (1.0 - std::exp(-2.0 * x)) / x);
    CHECK(log_scaled_bessel_i(1.5, x) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("scaled Bessel against std::cyl_bessel_i at moderate argument") {
  for (double nu : {0.0, 1.0, 2.0, 5.0, 11.0}) {
    for (double x : {0.3, 3.0, 20.0, 45.0, 120.0, 300.0}) {
      double oracle = std::log(std::cyl_bessel_i(nu, x)) - x;
      CHECK(log_scaled_bessel_i(nu, x) == doctest::Approx(oracle).epsilon(1e-9));
    }
  }
}

TEST_CASE("scaled Bessel range, monotonicity, recurrence") {
  std::vector<double> xs;
  for (double lx = 0.0; lx <= 6.0; lx += 0.25) xs.push_back(std::pow(10.0, lx));
  for (double nu : {0.0, 0.5, 1.0, 4.5}) {
    for (double x : xs) {
      double v = std::exp(log_scaled_bessel_i(nu, x));
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
    }
  }
  // monotone nonincreasing in nu at fixed x
  for (double x : {0.7, 5.0, 60.0, 2000.0}) {
    double prev = log_scaled_bessel_i(0.0, x);
    for (double nu = 0.5; nu <= 12.0; nu += 0.5) {
      double cur = log_scaled_bessel_i(nu, x);
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }
  // I_{nu-1} - I_{nu+1} = (2 nu / x) I_nu in scaled form
  for (double nu : {1.0, 1.5, 3.0, 7.5}) {
    for (double x : {0.5, 4.0, 29.0, 33.0, 450.0, 9.5e3}) {
      double lo = std::exp(log_scaled_bessel_i(nu - 1.0, x));
      double hi = std::exp(log_scaled_bessel_i(nu + 1.0, x));
      double mid = std::exp(log_scaled_bessel_i(nu, x));
      CHECK(lo - hi == doctest::Approx((2.0 * nu / x) * mid).epsilon(1e-8));
    }
  }
}

TEST_CASE("branch continuity") {
  // series vs recurrence branch at x = 30
  for (double nu : {0.0, 0.5, 1.0, 4.5, 10.0, 100.0}) {
    double below = log_scaled_bessel_i(nu, 30.0);
    double above = log_scaled_bessel_i(nu, 30.0 * (1.0 + 1e-12));
    CHECK(below == doctest::Approx(above).epsilon(1e-10));
  }
  // recurrence branch vs two-term tail at X_switch. The mandated tail keeps a
  // single correction term, so its truncation error at the switch is
  // ~(4nu^2-1)(4nu^2-9)/(2(8x)^2): below 1e-8 only for small orders.
  for (double nu : {0.0, 0.5, 1.0}) {
    double below = log_scaled_bessel_i(nu, kBesselXSwitch);
    double above = log_scaled_bessel_i(nu, kBesselXSwitch * (1.0 + 1e-13));
    CHECK(std::fabs(below - above) < 1e-8);
  }
  for (double nu : {4.5, 6.5}) {
    double below = log_scaled_bessel_i(nu, kBesselXSwitch);
    double above = log_scaled_bessel_i(nu, kBesselXSwitch * (1.0 + 1e-13));
    CHECK(std::fabs(below - above) < 1e-5);
  }
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(log_scaled_bessel_i(-1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(log_scaled_bessel_i(1.0, -1.0), std::domain_error);
  CHECK_THROWS_AS(log_scaled_bessel_i(kBesselMaxOrder + 1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(log_c_vmf(2, -0.5), std::domain_error);
  CHECK_THROWS_AS(log_c_vmf(0, 1.0), std::domain_error);
  CHECK_THROWS_AS(surface_area(-1), std::domain_error);
}

TEST_CASE("vMF normalizing constant") {
  CHECK(log_c_vmf(2, 0.0) == doctest::Approx(-std::log(4.0 * M_PI)).epsilon(1e-14));
  // c_2(kappa) = kappa / (4 pi sinh kappa) via the half-integer oracle,
  // with sinh kappa = e^kappa (1 - e^{-2 kappa}) / 2 to stay finite
  for (double k : {0.3, 1.0, 5.0, 25.0, 700.0}) {
    double oracle =
        std::log(k) - std::log(4.0 * M_PI) - (k + std::log1p(-std::exp(-2.0 * k)) - std::log(2.0));
    CHECK(log_c_vmf(2, k) == doctest::Approx(oracle).epsilon(1e-12));
  }
  CHECK(std::exp(log_c_vmf(2, 1.0)) == doctest::Approx(0.0677139131378956).epsilon(1e-12));
  CHECK(log_c_vmf(1, 1.0) ==
        doctest::Approx(-std::log(2.0 * M_PI * static_cast<double>(i0_series(1.0L)))).epsilon(1e-13));

  // continuity into the uniform limit
  CHECK(std::fabs(log_c_vmf(3, 1e-8) - (-log_surface_area(3))) < 1e-8);
  // smoothness across the series/recurrence boundary
  CHECK(log_c_vmf(4, 30.0) == doctest::Approx(log_c_vmf(4, 30.0 * (1 + 1e-12))).epsilon(1e-10));
}

TEST_CASE("split form") {
  for (int d : {1, 2, 3, 10}) {
    for (double k : {0.0, 0.5, 5.0, 1e3, 2e4}) {
      auto [A, B] = log_c_vmf_split(d, k);
      CHECK(B == -1.0);
      CHECK(A + B * k == doctest::Approx(log_c_vmf(d, k)).epsilon(1e-10));
    }
  }
  auto [A1, B1] = log_c_vmf_split(1, 0.0);
  CHECK(A1 == doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-14));
}

TEST_CASE("surface areas") {
  CHECK(surface_area(1) == doctest::Approx(2.0 * M_PI).epsilon(1e-14));
  CHECK(surface_area(2) == doctest::Approx(4.0 * M_PI).epsilon(1e-14));
  CHECK(surface_area(3) == doctest::Approx(2.0 * M_PI * M_PI).epsilon(1e-14));
  CHECK(surface_area(0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("bessel ratio") {
  // A_2(kappa) = I_{3/2}/I_{1/2} = coth(kappa) - 1/kappa
  for (double k : {0.5, 2.0, 5.0, 50.0, 2000.0}) {
    CHECK(scaled_bessel_ratio(0.5, k) ==
          doctest::Approx(1.0 / std::tanh(std::min(k, 300.0)) - 1.0 / k).epsilon(1e-10));
  }
  CHECK(scaled_bessel_ratio(0.5, 5.0) == doctest::Approx(0.8000908039820193).epsilon(1e-12));
  // consistency with log differences in the recurrence branch
  for (double nu : {1.0, 3.5}) {
    for (double x : {40.0, 800.0}) {
      double byratio = scaled_bessel_ratio(nu, x);
      double bylogs = std::exp(log_scaled_bessel_i(nu + 1.0, x) - log_scaled_bessel_i(nu, x));
      CHECK(byratio == doctest::Approx(bylogs).epsilon(1e-9));
    }
  }
}

TEST_CASE("memoized table tracks direct evaluation") {
  for (int d : {1, 2, 3, 6, 11}) {
    LogCvmf lc(d);
    for (double lx = -2.0; lx <= 4.0; lx += 0.03125) {
      double x = std::pow(10.0, lx);
      CHECK(std::fabs(lc(x) - log_c_vmf(d, x)) < 1e-8);
    }
    CHECK(lc(0.0) == doctest::Approx(-log_surface_area(d)).epsilon(1e-13));
    // beyond the table both paths use the same tail expansion
    CHECK(lc(2e4) == doctest::Approx(log_c_vmf(d, 2e4)).epsilon(1e-12));
    CHECK(lc.split_prefactor(5.0) == doctest::Approx(log_c_vmf(d, 5.0) + 5.0).epsilon(1e-8));
  }
}
