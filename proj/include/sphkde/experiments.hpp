#pragma once

//! Monte Carlo study harness. For a grid of dimensions and sample sizes it
//! measures the relative bandwidth error (h_hat - h_MISE) / h_MISE of each
//! selector over M replicates, aggregates trimmed summaries, fits log-log
//! convergence rates, and runs bootstrap normality checks; a second study
//! compares the L2 density errors of the selected kernel estimates against
//! the fitted parametric model and the ISE oracle.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sphkde/optimize.hpp"
#include "sphkde/stats.hpp"
#include "sphkde/vmf.hpp"

namespace sphkde::experiments {

//! Data-generating truths used throughout: "vmf" is a single component with
//! mean e_1 and concentration 5; "mvmf" places four components at +-e_1 and
//! +-e_{d+1}, concentration 5 each, equal weights. Valid for 1 <= d <= 10.
vmf::VmfMixture preset(const std::string& name, int d);

//! Lower-case selector labels used in configs and CSV output
//! ("cv", "ami", "emi", "mise_oracle", "ise_oracle").
const char* method_name(optimize::Method m);
optimize::Method method_from_name(const std::string& name);

//! Study configuration. The truth is either a named preset instantiated per
//! dimension or a fixed custom mixture (in which case every entry of dims
//! must equal its dimension). Sample sizes are n = floor(2^l) over log2_n.
struct ExperimentConfig {
  std::string preset = "vmf";  // "vmf", "mvmf", or "custom"
  std::optional<vmf::VmfMixture> custom_truth;
  std::vector<int> dims = {1, 2, 3, 4, 5};
  std::vector<double> log2_n = {7.0, 7.5, 8.0, 8.5, 9.0, 9.5, 10.0, 10.5, 11.0};
  int replicates = 300;  // M
  std::vector<optimize::Method> selectors = {optimize::Method::kCv, optimize::Method::kAmi,
                                             optimize::Method::kEmi};
  std::size_t is_draws = 20000;  // B, importance-sample size for MISE/ISE evaluation
  std::uint64_t seed = 0;
  //! Smallest n entering the rate fits; 0 picks the preset default
  //! (512 for "mvmf", 128 otherwise).
  std::size_t n_min_fit = 0;
  double trim = 0.05;
  //! Replicate-level workers. Output is bit-identical for any value.
  unsigned n_threads = 1;
};

//! Parses a JSON config. Keys: "truth" (preset name string or a mixture
//! object), "dims", "log2_n", "M", "selectors", "B", "seed", "n_min_fit",
//! "trim". Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

//! One (d, n) cell of the rate study. Vectors are indexed like the study's
//! selector list. A cell whose oracle bandwidth is infinite carries no
//! replicate data and is marked skipped with a reason.
struct CellResult {
  int d = 0;
  std::size_t n = 0;
  double h_mise = 0.0;
  bool h_mise_boundary = false;
  bool skipped = false;
  std::string skip_reason;
  std::vector<std::vector<double>> relative_errors;  // [selector][replicate]
  std::vector<stats::TrimmedSummary> summaries;      // per selector
  std::vector<double> lilliefors_p;                  // per selector; NaN when undefined
  std::vector<double> boundary_fraction;             // per selector
  std::vector<bool> unstable;                        // boundary fraction > 0.2
};

//! Log-log rate fit of the trimmed RMSE against n for one (d, selector)
//! combination, with the theoretical exponent it is tested against. When
//! fewer than two usable cells remain the fit fields are NaN.
struct SelectorRateFit {
  int d = 0;
  optimize::Method method = optimize::Method::kCv;
  double beta_star = 0.0;
  double delta_pct = 0.0;  // (beta_star - beta_hat) / |beta_star| * 100
  stats::RateFit fit;
};

struct RateStudy {
  std::vector<optimize::Method> selectors;
  std::vector<CellResult> cells;  // dims outer, log2_n inner
  std::vector<SelectorRateFit> fits;
};

//! Runs the full rate study: per cell one shared MISE-oracle bandwidth, M
//! replicate selections with per-replicate derived seeds, trimmed summaries,
//! a normality check of the rate-normalized errors, and per-(d, selector)
//! slope fits restricted to n >= n_min.
RateStudy run_rate_experiment(const ExperimentConfig& cfg);

//! One (d, n) cell of the density-error study. Errors are L2 norms
//! sqrt(ISE), importance-sampled with draws frozen per replicate and shared
//! by every bandwidth, so the oracle column is a per-replicate lower bound
//! over the common search grid.
struct ErrorCell {
  int d = 0;
  std::size_t n = 0;
  std::vector<std::vector<double>> l2_errors;  // [selector][replicate]
  std::vector<double> parametric_errors;       // [replicate]
  std::vector<double> mean_l2;                 // per selector
  double parametric_mean = 0.0;
};

struct ErrorStudy {
  std::vector<optimize::Method> selectors;  // config list plus ise_oracle if absent
  std::vector<ErrorCell> cells;
};

//! Runs the density-error comparison: per replicate, each configured
//! selector's estimate is scored by the shared ISE metric, the ISE oracle
//! minimizes that metric over the pilot grid united with every selector's
//! candidate, and the parametric error |g(theta_hat) - g(theta_0)|_2 is
//! computed in closed form from mixture roughness algebra.
ErrorStudy run_density_error_experiment(const ExperimentConfig& cfg);

//! CSV renderings with fixed headers:
//!   cells:  d,n,selector,mean,rmse,median,lilliefors_p,skipped
//!   fits:   d,selector,beta_hat,beta_star,delta_pct,r2,p_onesided
//!   errors: d,n,selector,mean_l2_error   (selector includes "parametric")
std::string cells_csv(const RateStudy& study);
std::string fits_csv(const RateStudy& study);
std::string errors_csv(const ErrorStudy& study);

}  // namespace sphkde::experiments
