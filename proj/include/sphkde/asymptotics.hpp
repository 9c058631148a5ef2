#pragma once

//! Asymptotic-variance constants of the cross-validation bandwidth selector:
//! radial kernel moments (lambda_d, v_d, b_d), the derivative-criterion
//! variance constant sigma0^2 (numeric for generic kernels, closed form for
//! the vMF kernel), the kernel and density contributions tau and rho, their
//! Euclidean counterparts, and the theoretical rate exponents.

#include <cstddef>
#include <functional>

namespace sphkde::asymptotics {

//! Radial kernel profile L: [0, inf) -> [0, inf). Derivatives may be left
//! empty, in which case central differences with step 1e-5 * (1 + |s|) are
//! used; profiles that are not differentiable at all must say so and are
//! rejected by the variance functional. tail_scale seeds the search for the
//! truncation point of the improper integrals: they are cut where the
//! integrand drops below 1e-16 of its peak.
struct KernelProfile {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  std::function<double(double)> second_derivative;
  double tail_scale = 1.0;
  bool differentiable = true;
};

//! L(s) = e^{-s}, with analytic derivatives.
KernelProfile vmf_profile();

//! L = 1 on [0, 1]; bounded and integrable but not differentiable.
KernelProfile indicator_profile();

struct KernelConstants {
  double v = 0.0;  // lambda_d(L^2) / lambda_d(L)^2
  double b = 0.0;  // beta_{d,2} / (d lambda_d(L))
};

struct VarianceConstants {
  double tau = 0.0;
  double rho = 0.0;
  double sigma2 = 0.0;     // tau * rho
  double beta_star = 0.0;  // -d / (2d + 8)
  int d = 0;
};

struct RateExponents {
  double beta_cv = 0.0;   // -d / (2d + 8)
  double beta_ami = 0.0;  // -4 / (2d + 8)
  double beta_emi = 0.0;  // -1/2
};

struct EuclideanConstants {
  double rho_gauss = 0.0;
  double tau_gauss = 0.0;
};

//! lambda_d(L^k) = 2^{d/2-1} omega_{d-1} int_0^inf L(s)^k s^{d/2-1} ds by
//! adaptive quadrature after the s = a^2 substitution. Throws when the tail
//! never decays (non-integrable profile) or the integral is not finite.
double lambda_d(const KernelProfile& L, int d, int power = 1);

//! The scale-invariant kernel shape constants (v_d, b_d), with
//! beta_{d,2} = 2^{d/2-1} omega_{d-1} int_0^inf L(s) s^{d/2} ds.
KernelConstants kernel_constants(const KernelProfile& L, int d);

//! Variance constant of the derivative of the cross-validation criterion for
//! a generic kernel, by nested quadrature of the radial convolution profile
//! and its partial derivatives. Resolution is doubled until successive values
//! agree to 1e-4 relative. Non-differentiable profiles are rejected.
double sigma0_sq_numeric(const KernelProfile& L, int d);

//! Fixed-resolution variant (n_radial radial nodes; angular and outer node
//! counts scale proportionally) for convergence diagnostics.
double sigma0_sq_numeric_at(const KernelProfile& L, int d, std::size_t n_radial);

//! Closed form of sigma0^2 for the vMF kernel:
//! 2^{-d} pi^{-d/2} d (d+2) (1 + 2^{-(d/2+2)} - 2 (3/2)^{-(d/2+2)}).
double sigma0_sq_vmf(int d);

//! Kernel contribution tau_d assembled from sigma0^2, v_d and b_d; the
//! generic overload computes all three numerically for the given profile.
double tau_from_constants(int d, double sigma0_sq, double v, double b);
double tau_generic(const KernelProfile& L, int d);

//! Closed form of tau_d for the vMF kernel.
double tau_vmf(int d);

//! Density contribution rho_d for a vMF(mu, kappa) truth, evaluated in
//! log-scaled form; kappa = 0 yields +infinity (uniform density).
double rho_vmf(int d, double kappa);

//! rho_d(f) = R / C^{d/(d+4)} from a density's roughness R and curvature C;
//! C <= 0 yields +infinity.
double rho_from_density(int d, double roughness, double curvature);

//! sigma^2 = tau_vmf(d) * rho_vmf(d, kappa), bundled with the rate exponent.
VarianceConstants sigma_sq(int d, double kappa);

//! Gaussian-data counterparts on R^d: rho_gauss is free of the shape
//! parameter and tau_gauss coincides with the vMF kernel's tau.
EuclideanConstants euclidean_constants(int d);

//! Theoretical convergence exponents of the relative bandwidth error for the
//! CV, asymptotic plug-in, and exact plug-in selectors.
RateExponents rate_exponents(int d);

}  // namespace sphkde::asymptotics
