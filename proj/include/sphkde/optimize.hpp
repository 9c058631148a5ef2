#pragma once

//! Bandwidth selection: grid-then-refine one-dimensional minimization and the
//! selectors built on it (cross-validation, plug-in asymptotic MISE, plug-in
//! exact MISE, and the oracle MISE/ISE minimizers).

#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "sphkde/sphere.hpp"
#include "sphkde/vmf.hpp"

namespace sphkde::optimize {

enum class Method { kCv, kAmi, kEmi, kMiseOracle, kIseOracle };

struct SelectorResult {
  double h = 0.0;               // selected bandwidth; may be +infinity
  double criterion_value = 0.0; // criterion at h (mise_at_infinity for h = +inf)
  Method method = Method::kCv;
  double grid_winner = 0.0;     // best grid node before refinement
  int refine_iterations = 0;
  bool converged = false;
  //! Set when the refined minimum lies within one grid step of the search
  //! boundary (including the +infinity candidate winning); such selections
  //! should be treated as degenerate rather than interior optima.
  bool boundary_flag = false;
};

//! The default cross-validation search grid {0.005, 0.030, ..., 0.555}.
std::vector<double> default_cv_grid();

//! Multiples {0.5, 0.55, ..., 2.0} of a pilot bandwidth; the search grid for
//! every MISE-type criterion.
std::vector<double> mise_grid(double h_pilot);

//! Evaluates the criterion on the grid, then golden-section refinement on the
//! interval bracketing the best node until its relative width is below
//! rel_tol. An endpoint winner expands the bracket once by a factor of two.
//! The returned value never exceeds any evaluated node. Throws
//! std::invalid_argument for an empty or nonpositive grid and
//! std::runtime_error naming h when the criterion returns NaN.
SelectorResult minimize_1d(const std::function<double(double)>& criterion,
                           const std::vector<double>& grid, double rel_tol = 1e-8);

//! Cross-validation selector: minimizes cv_loss over the default (or given)
//! grid. The search stays on the finite grid with one boundary expansion;
//! there is no +infinity candidate because the criterion's limit depends on
//! the unknown truth.
SelectorResult select_cv(const sphere::SphericalSample& sample, unsigned n_threads = 1);
SelectorResult select_cv(const sphere::SphericalSample& sample, const std::vector<double>& grid,
                         unsigned n_threads = 1);

//! Plug-in bandwidth for a known mixture: the closed-form asymptotic-MISE
//! minimizer h_amise(d, n, curvature(theta)). Zero curvature yields h = +inf
//! with the boundary flag set. The rng overload covers mixtures with d >= 3,
//! whose curvature functional is estimated by importance sampling.
SelectorResult ami_for_mixture(const vmf::VmfMixture& theta, std::size_t n);
SelectorResult ami_for_mixture(const vmf::VmfMixture& theta, std::size_t n, std::mt19937_64& rng);

//! Asymptotic-MISE plug-in selector: fits theta (single-component MLE for
//! r = 1, EM otherwise) and returns ami_for_mixture of the fit.
SelectorResult select_ami(const sphere::SphericalSample& sample);
SelectorResult select_ami(const sphere::SphericalSample& sample, std::size_t r, std::mt19937_64& rng);

//! Exact-MISE plug-in for a known mixture: minimizes exact_mise over
//! mise_grid(h_ami(theta)) with refinement, always comparing against the
//! h = +infinity candidate via mise_at_infinity.
SelectorResult emi_for_mixture(const vmf::VmfMixture& theta, std::size_t n, std::mt19937_64& rng,
                               std::size_t is_draws = 20000);

//! Exact-MISE plug-in selector: fit theta, then emi_for_mixture.
SelectorResult select_emi(const sphere::SphericalSample& sample, std::mt19937_64& rng,
                          std::size_t r = 1, std::size_t is_draws = 20000);

//! Oracle selectors: the same machinery run on the true mixture. The MISE
//! oracle is emi_for_mixture with the truth substituted; the ISE oracle
//! minimizes the sample's exact integrated squared error (importance-sampled
//! above the exact-path size cap, with draws frozen across the sweep).
SelectorResult select_mise_oracle(const vmf::VmfMixture& truth, std::size_t n,
                                  std::mt19937_64& rng, std::size_t is_draws = 20000);
SelectorResult select_ise_oracle(const sphere::SphericalSample& sample,
                                 const vmf::VmfMixture& truth, std::mt19937_64& rng,
                                 std::size_t is_draws = 20000);

}  // namespace sphkde::optimize
