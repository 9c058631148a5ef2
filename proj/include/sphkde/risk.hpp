#pragma once

//! Risk functionals for vMF-kernel density estimation: exact MISE for vMF
//! mixture truths (closed-form Psi0; Psi1/Psi2 by deterministic surface
//! quadrature for d <= 2 and by importance sampling on frozen draws for
//! d >= 3), the asymptotic MISE and its minimizer, and exact /
//! importance-sampled ISE.

#include <cstddef>
#include <random>
#include <vector>

#include "sphkde/kde.hpp"
#include "sphkde/specfun.hpp"
#include "sphkde/vmf.hpp"

namespace sphkde::risk {

//! Largest sample size accepted by the O(n^2) exact ISE path.
inline constexpr std::size_t kExactIseMaxN = 2048;

//! Precomputes everything h-independent for the exact MISE of a mixture
//! truth. For d <= 2 the Psi1/Psi2 integrals are evaluated on a product
//! quadrature rule sized to the mixture's concentration (the rng is left
//! untouched); for d >= 3 they are importance-sampling estimates on one
//! frozen set of Monte Carlo draws (reduced to dot products with the
//! component means). Either way h -> exact_mise(h) is deterministic and
//! smooth in h.
class RiskEvaluator {
 public:
  RiskEvaluator(vmf::VmfMixture truth, std::size_t n, std::size_t is_draws, std::mt19937_64& rng);

  const vmf::VmfMixture& truth() const { return truth_; }
  std::size_t sample_size() const { return n_; }
  std::size_t is_draws() const { return B_; }
  int dim() const { return truth_.dim(); }

  //! Row-major r x r matrices. psi0 is closed form; psi1/psi2 come from the
  //! quadrature rule (d <= 2) or the frozen draws (d >= 3; psi2 exactly
  //! symmetric because each unordered pair shares one draw set).
  const std::vector<double>& psi0() const { return psi0_; }
  std::vector<double> psi1(double h) const;
  std::vector<double> psi2(double h) const;

  //! p^T M p with the truth's weights.
  double quadratic_form(const std::vector<double>& matrix) const;

  //! Exact MISE at the stored n, or at an explicit n.
  double exact_mise(double h) const { return exact_mise(h, n_); }
  double exact_mise(double h, std::size_t n) const;

  //! Standard error of exact_mise(h, n) from the importance-sampling noise
  //! in Psi1/Psi2 (the draw sets are independent, so variances add). Zero on
  //! the d <= 2 quadrature path.
  double exact_mise_standard_error(double h) const { return exact_mise_standard_error(h, n_); }
  double exact_mise_standard_error(double h, std::size_t n) const;

  //! The n-free part p^T [Psi2(h) - 2 Psi1(h) + Psi0] p.
  double integrated_squared_bias(double h) const;

  //! Squared distance of the truth from the uniform density.
  double mise_at_infinity() const;

 private:
  vmf::VmfMixture truth_;
  std::size_t n_;
  std::size_t B_;
  specfun::LogCvmf logc_;
  std::vector<double> psi0_;        // r x r
  // Quadrature path (d <= 2).
  bool exact_ = false;
  std::size_t n_nodes_ = 0;
  std::vector<double> node_weights_;
  std::vector<double> node_dots_;      // [i][q]: node q dotted with mu_i
  std::vector<double> node_weighted_;  // [j][q]: weight_q * f_j(node q)
  // Importance-sampling path (d >= 3).
  std::vector<double> comp_dots_;   // [j][i][b]: draw b of component j, dotted with mu_i
  std::vector<double> pair_dots_i_; // [pair(i,j)][b]: mixture draw dotted with mu_i
  std::vector<double> pair_dots_j_; // [pair(i,j)][b]: mixture draw dotted with mu_j
  std::size_t pair_index(std::size_t i, std::size_t j) const;
  std::vector<double> node_convolutions(double x) const;
};

RiskEvaluator build_risk_evaluator(const vmf::VmfMixture& truth, std::size_t n, std::size_t is_draws,
                                   std::mt19937_64& rng);

double exact_mise(const RiskEvaluator& ev, double h);

//! p^T Psi0 p - 1/omega_d: the MISE of the uniform estimate (h = +inf).
double mise_at_infinity(const vmf::VmfMixture& truth);

//! n^{-1} h^{-d} (2 sqrt(pi))^{-d} + h^4 curvature / 4. h = +inf yields
//! +inf when curvature > 0 and 0 when curvature = 0.
double amise(int d, std::size_t n, double curvature, double h);

//! [d (2 sqrt(pi))^{-d} / curvature]^{1/(d+4)} n^{-1/(d+4)};
//! curvature <= 0 gives the +inf sentinel.
double h_amise(int d, std::size_t n, double curvature);

//! Closed-form integrated squared error of a fitted model against a vMF
//! mixture truth; O(n^2), restricted to n <= kExactIseMaxN.
double exact_ise(const kde::KdeModel& model, const vmf::VmfMixture& truth);

//! Importance-sampled ISE with the truth as proposal.
double is_ise(const kde::KdeModel& model, const vmf::VmfMixture& truth, std::size_t is_draws,
              std::mt19937_64& rng);

}  // namespace sphkde::risk
