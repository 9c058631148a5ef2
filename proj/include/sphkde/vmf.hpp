#pragma once

//! von Mises-Fisher mixtures on S^d: density, sampling, maximum likelihood,
//! EM, and the closed-form roughness and curvature functionals.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sphkde/sphere.hpp"

namespace sphkde::vmf {

//! Largest concentration the sampler is designed for.
inline constexpr double kMaxSampleKappa = 1e8;

struct VmfComponent {
  sphere::UnitVector mu;
  double kappa = 0.0;  // >= 0
};

//! Convex combination of vMF components sharing one dimension.
//! Weights are validated (nonnegative, sum to 1 within 1e-12) and then
//! renormalized exactly. Per-component log-normalizers are precomputed.
class VmfMixture {
 public:
  VmfMixture(std::vector<VmfComponent> components, std::vector<double> weights);

  //! Single-component convenience constructor.
  static VmfMixture single(sphere::UnitVector mu, double kappa);

  int dim() const { return d_; }
  std::size_t size() const { return components_.size(); }
  const VmfComponent& component(std::size_t j) const { return components_[j]; }
  double weight(std::size_t j) const { return weights_[j]; }
  const std::vector<double>& weights() const { return weights_; }

  //! log c_d(kappa_j).
  double log_norm_const(std::size_t j) const { return log_c_[j]; }

  double log_density(std::span<const double> x) const;
  double log_density(const sphere::UnitVector& x) const { return log_density(std::span<const double>(x.coords())); }
  double density(std::span<const double> x) const;

 private:
  int d_;
  std::vector<VmfComponent> components_;
  std::vector<double> weights_;
  std::vector<double> log_c_;       // log c_d(kappa_j)
  std::vector<double> log_w_pref_;  // log p_j + log c_d(kappa_j) + kappa_j
};

struct FitReport {
  // The fitted mixture lives behind a value; VmfMixture has no default
  // constructor so the report carries it directly.
  VmfMixture mixture;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;  // per accepted EM iteration, nondecreasing
};

double log_density(const VmfMixture& mix, const sphere::UnitVector& x);

//! i.i.d. draws: component by inverse-CDF on the weights, cosine t by the
//! Wood rejection scheme, tangent direction uniform in the tangent frame.
//! Throws std::domain_error when any kappa exceeds kMaxSampleKappa.
sphere::SphericalSample sample(const VmfMixture& mix, std::size_t n, std::mt19937_64& rng);

//! Mean resultant ratio A_d(kappa) = I_{(d+1)/2}(kappa) / I_{(d-1)/2}(kappa),
//! the expectation of x.mu under vMF(mu, kappa).
double mean_resultant_ratio(int d, double kappa);

//! Inverse of A_d by Newton with a bisection fallback; |A_d(k) - rbar| <= 1e-10.
//! Throws std::runtime_error("degenerate concentration") when rbar >= 1 - 1e-12.
double solve_concentration(int d, double rbar);

//! mu = normalized mean, kappa from the mean resultant length.
VmfComponent fit_mle_single(const sphere::SphericalSample& sample);

//! Best of `runs` EM fits with r components, each capped at max_iter
//! iterations. Initialization: r sample points as means, kappa = 1,
//! uniform weights. Empty components are re-seeded from the lowest-density
//! point. The returned trace is the best run's log-likelihood history.
FitReport fit_em(const sphere::SphericalSample& sample, std::size_t r, std::mt19937_64& rng,
                 int runs = 5, int max_iter = 100);

//! R(f) = int f^2 dsigma, in closed form for any vMF mixture.
double roughness(const VmfMixture& mix);

//! Laplacian of the radial extension f(y/|y|) at x, in closed form.
double laplacian_radial(const VmfMixture& mix, const sphere::UnitVector& x);
double laplacian_radial(const VmfMixture& mix, std::span<const double> x);

//! R(laplacian of the radial extension): closed form for r = 1, quadrature
//! for mixtures with d <= 2. Mixtures with d >= 3 need the rng overload.
double curvature_functional(const VmfMixture& mix);

//! As above, but mixtures with d >= 3 fall back to importance-sampling
//! Monte Carlo with the mixture itself as proposal and is_draws draws.
double curvature_functional(const VmfMixture& mix, std::mt19937_64& rng, std::size_t is_draws = 10000);

//! The importance-sampling estimator itself (any d), exposed so it can be
//! validated against quadrature where a deterministic rule exists.
double curvature_monte_carlo(const VmfMixture& mix, std::mt19937_64& rng, std::size_t is_draws);

//! JSON config: object with "d", "mu" (array of d+1-vectors), "kappa", "p".
VmfMixture parse_mixture_json(const std::string& json_text);
VmfMixture load_mixture_json(const std::string& path);
std::string mixture_to_json(const VmfMixture& mix);

}  // namespace sphkde::vmf
