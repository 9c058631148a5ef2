#pragma once

//! Exponentially scaled modified Bessel functions and von Mises-Fisher
//! normalizing constants, stable from kappa = 0 up to kappa >= 1e4.
//! All downstream code consumes log-scaled values; raw I_nu is never formed.

#include <memory>
#include <utility>
#include <vector>

namespace sphkde::specfun {

//! Branch switch for the large-argument asymptotic expansion.
inline constexpr double kBesselXSwitch = 1e4;
//! Hard cap on the supported order (covers d <= 1025).
inline constexpr double kBesselMaxOrder = 512.0;

//! log(e^{-x} I_nu(x)). Power series for x <= 30, backward-recurrence
//! (Miller) evaluation normalized against a low-order asymptotic series for
//! 30 < x <= kBesselXSwitch, and the two-term asymptotic expansion
//! log1p(-D(D-2)/(8x)) - log(2*pi*x)/2 with D = 2*nu+1 beyond.
//! Throws std::domain_error for negative inputs or nu > kBesselMaxOrder.
double log_scaled_bessel_i(double nu, double x);

//! I_{nu+1}(x) / I_nu(x), computed from the same scaled machinery.
double scaled_bessel_ratio(double nu, double x);

//! Surface area omega_d of S^d (d >= 0; omega_0 = 2 is used internally).
double surface_area(int d);
double log_surface_area(int d);

//! log c_d^vMF(kappa); the kappa=0 limit -log(omega_d) is taken analytically.
double log_c_vmf(int d, double kappa);

//! (A, B) with log c_d^vMF(kappa) = A + B*kappa and B = -1 exactly, so
//! callers can combine the linear exponent with kernel exponents before
//! exponentiating.
std::pair<double, double> log_c_vmf_split(int d, double kappa);

//! Memoized evaluator of log c_d^vMF for a fixed dimension. Backed by a
//! cubic-Hermite table of the smooth series remainder in u = sqrt(x) over
//! [0, kBesselXSwitch] (absolute error below ~1e-9); falls back to direct
//! evaluation beyond the table. Immutable after construction; safe to share
//! across threads.
class LogCvmf {
 public:
  explicit LogCvmf(int d);

  int dim() const { return d_; }
  //! log c_d^vMF(x)
  double operator()(double x) const;
  //! A(x) = log c + x (the split prefactor; B = -1).
  double split_prefactor(double x) const { return (*this)(x) + x; }

 private:
  int d_;
  double nu_;
  double const_;  // nu*log2 + lgamma(nu+1) - ((d+1)/2) log(2*pi)
  std::shared_ptr<const std::vector<double>> val_, der_;  // knot data in u
  double du_;
};

}  // namespace sphkde::specfun
