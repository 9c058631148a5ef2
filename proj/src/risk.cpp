#include "sphkde/risk.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "sphkde/sphere.hpp"

namespace sphkde::risk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double check_bandwidth(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("risk: bandwidth must be positive and finite");
  return 1.0 / (h * h);
}

//! ||a mu_a + b mu_b|| from the cosine between the unit directions.
double combined_norm(double a, double b, double cosine) {
  return std::sqrt(std::max(0.0, a * a + b * b + 2.0 * a * b * cosine));
}

}  // namespace

std::size_t RiskEvaluator::pair_index(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  // Row-start offsets of the packed upper triangle.
  const std::size_t r = truth_.size();
  return i * r - i * (i + 1) / 2 + j;
}

RiskEvaluator::RiskEvaluator(vmf::VmfMixture truth, std::size_t n, std::size_t is_draws,
                             std::mt19937_64& rng)
    : truth_(std::move(truth)), n_(n), B_(is_draws), logc_(truth_.dim()) {
  if (n_ == 0) throw std::invalid_argument("RiskEvaluator: n must be >= 1");
  if (B_ < 2) throw std::invalid_argument("RiskEvaluator: is_draws must be >= 2");
  const std::size_t r = truth_.size();
  const int d = truth_.dim();

  psi0_.assign(r * r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const auto& ci = truth_.component(i);
    for (std::size_t j = 0; j < r; ++j) {
      const auto& cj = truth_.component(j);
      const double s = combined_norm(ci.kappa, cj.kappa, ci.mu.dot(cj.mu));
      psi0_[i * r + j] =
          std::exp(truth_.log_norm_const(i) + truth_.log_norm_const(j) - specfun::log_c_vmf(d, s));
    }
  }

  if (d <= 2) {
    // Deterministic product quadrature. The integrands vary on the angular
    // scale of the mixture concentrations (the kernel convolution is closed
    // form and never sharper than the components), so the rule is sized by
    // the largest kappa. The rng is left untouched on this path.
    exact_ = true;
    double kappa_max = 0.0;
    for (std::size_t j = 0; j < r; ++j)
      kappa_max = std::max(kappa_max, truth_.component(j).kappa);
    const int order = static_cast<int>(std::ceil(std::min(kappa_max, 5000.0)));
    const auto rule = (d == 1) ? sphere::quadrature(1, 256 + 16 * order)
                               : sphere::quadrature(2, std::min(48 + 4 * order, 768));
    n_nodes_ = rule.nodes.size();
    node_weights_ = rule.weights;
    node_dots_.assign(r * n_nodes_, 0.0);
    node_weighted_.assign(r * n_nodes_, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      const auto& mu = truth_.component(i).mu.coords();
      const double kappa = truth_.component(i).kappa;
      const double lc = truth_.log_norm_const(i);
      for (std::size_t q = 0; q < n_nodes_; ++q) {
        double t = 0.0;
        for (std::size_t k = 0; k < mu.size(); ++k) t += mu[k] * rule.nodes[q][k];
        node_dots_[i * n_nodes_ + q] = t;
        node_weighted_[i * n_nodes_ + q] = node_weights_[q] * std::exp(lc + kappa * t);
      }
    }
    return;
  }

  // Frozen draws, reduced to dot products with every component mean.
  auto draw_component = [&](std::size_t j, std::size_t count) {
    return vmf::sample(vmf::VmfMixture::single(truth_.component(j).mu, truth_.component(j).kappa),
                       count, rng);
  };

  comp_dots_.assign(r * r * B_, 0.0);
  for (std::size_t j = 0; j < r; ++j) {
    auto draws = draw_component(j, B_);
    for (std::size_t b = 0; b < B_; ++b) {
      auto y = draws.point(b);
      for (std::size_t i = 0; i < r; ++i) {
        comp_dots_[(j * r + i) * B_ + b] = truth_.component(i).mu.dot(y);
      }
    }
  }

  const std::size_t n_pairs = r * (r + 1) / 2;
  pair_dots_i_.assign(n_pairs * B_, 0.0);
  pair_dots_j_.assign(n_pairs * B_, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i; j < r; ++j) {
      const std::size_t p = pair_index(i, j);
      // Stratified draws from the equal mixture (f_i + f_j)/2: exact halves.
      const std::size_t half = B_ / 2;
      auto from_i = draw_component(i, half);
      auto from_j = draw_component(j, B_ - half);
      for (std::size_t b = 0; b < B_; ++b) {
        auto y = (b < half) ? from_i.point(b) : from_j.point(b - half);
        pair_dots_i_[p * B_ + b] = truth_.component(i).mu.dot(y);
        pair_dots_j_[p * B_ + b] = truth_.component(j).mu.dot(y);
      }
    }
  }
}

//! [i][q]: (K_h * f_i)(node q), using the closed-form vMF convolution.
std::vector<double> RiskEvaluator::node_convolutions(double x) const {
  const std::size_t r = truth_.size();
  const double lcx = logc_(x);
  std::vector<double> conv(r * n_nodes_);
  for (std::size_t i = 0; i < r; ++i) {
    const double kappa_i = truth_.component(i).kappa;
    const double pref = lcx + truth_.log_norm_const(i);
    const double* dots = node_dots_.data() + i * n_nodes_;
    for (std::size_t q = 0; q < n_nodes_; ++q) {
      conv[i * n_nodes_ + q] = std::exp(pref - logc_(combined_norm(x, kappa_i, dots[q])));
    }
  }
  return conv;
}

std::vector<double> RiskEvaluator::psi1(double h) const {
  const double x = check_bandwidth(h);
  const std::size_t r = truth_.size();
  if (exact_) {
    const auto conv = node_convolutions(x);
    std::vector<double> out(r * r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < r; ++j) {
        const double* ci = conv.data() + i * n_nodes_;
        const double* fj = node_weighted_.data() + j * n_nodes_;
        double acc = 0.0;
        for (std::size_t q = 0; q < n_nodes_; ++q) acc += ci[q] * fj[q];
        out[i * r + j] = acc;
      }
    }
    return out;
  }
  const double lcx = logc_(x);
  std::vector<double> out(r * r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const double kappa_i = truth_.component(i).kappa;
    const double pref = lcx + truth_.log_norm_const(i);
    for (std::size_t j = 0; j < r; ++j) {
      const double* dots = comp_dots_.data() + (j * r + i) * B_;
      double acc = 0.0;
      for (std::size_t b = 0; b < B_; ++b) {
        const double s = combined_norm(x, kappa_i, dots[b]);
        acc += std::exp(pref - logc_(s));
      }
      out[i * r + j] = acc / static_cast<double>(B_);
    }
  }
  return out;
}

std::vector<double> RiskEvaluator::psi2(double h) const {
  const double x = check_bandwidth(h);
  const std::size_t r = truth_.size();
  if (exact_) {
    const auto conv = node_convolutions(x);
    std::vector<double> out(r * r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = i; j < r; ++j) {
        const double* ci = conv.data() + i * n_nodes_;
        const double* cj = conv.data() + j * n_nodes_;
        double acc = 0.0;
        for (std::size_t q = 0; q < n_nodes_; ++q) acc += node_weights_[q] * ci[q] * cj[q];
        out[i * r + j] = acc;
        out[j * r + i] = acc;
      }
    }
    return out;
  }
  const double lcx = logc_(x);
  std::vector<double> out(r * r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const double kappa_i = truth_.component(i).kappa;
    const double lc_i = truth_.log_norm_const(i);
    const double a_i = lc_i + kappa_i;  // log c + kappa, the recentred prefactor
    for (std::size_t j = i; j < r; ++j) {
      const double kappa_j = truth_.component(j).kappa;
      const double lc_j = truth_.log_norm_const(j);
      const double a_j = lc_j + kappa_j;
      const std::size_t p = pair_index(i, j);
      const double* ti = pair_dots_i_.data() + p * B_;
      const double* tj = pair_dots_j_.data() + p * B_;
      double acc = 0.0;
      for (std::size_t b = 0; b < B_; ++b) {
        const double log_conv_i = lcx + lc_i - logc_(combined_norm(x, kappa_i, ti[b]));
        const double log_conv_j = lcx + lc_j - logc_(combined_norm(x, kappa_j, tj[b]));
        // log of (f_i(Y) + f_j(Y)) / 2 via the larger term.
        const double li = a_i + kappa_i * (ti[b] - 1.0);
        const double lj = a_j + kappa_j * (tj[b] - 1.0);
        const double hi = std::max(li, lj);
        const double log_mix = hi + std::log(0.5 * (std::exp(li - hi) + std::exp(lj - hi)));
        acc += std::exp(log_conv_i + log_conv_j - log_mix);
      }
      const double val = acc / static_cast<double>(B_);
      out[i * r + j] = val;
      out[j * r + i] = val;
    }
  }
  return out;
}

double RiskEvaluator::quadratic_form(const std::vector<double>& matrix) const {
  const std::size_t r = truth_.size();
  if (matrix.size() != r * r) throw std::invalid_argument("quadratic_form: matrix size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      acc += truth_.weight(i) * truth_.weight(j) * matrix[i * r + j];
    }
  }
  return acc;
}

double RiskEvaluator::exact_mise(double h, std::size_t n) const {
  const double x = check_bandwidth(h);
  if (n == 0) throw std::invalid_argument("exact_mise: n must be >= 1");
  const double variance_term =
      std::exp(2.0 * logc_(x) - logc_(2.0 * x) - std::log(static_cast<double>(n)));
  const auto p1 = psi1(h);
  const auto p2 = psi2(h);
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t r = truth_.size();
  std::vector<double> combo(r * r);
  for (std::size_t k = 0; k < r * r; ++k) {
    combo[k] = (1.0 - inv_n) * p2[k] - 2.0 * p1[k] + psi0_[k];
  }
  return variance_term + quadratic_form(combo);
}

double RiskEvaluator::exact_mise_standard_error(double h, std::size_t n) const {
  const double x = check_bandwidth(h);
  if (n == 0) throw std::invalid_argument("exact_mise_standard_error: n must be >= 1");
  if (exact_) return 0.0;
  const std::size_t r = truth_.size();
  const double lcx = logc_(x);
  const double inv_n = 1.0 / static_cast<double>(n);
  double var_total = 0.0;

  // Component draw sets feed the -2 p^T Psi1 p term: for the draws of
  // component j, each slot contributes sum_i (-2 p_i p_j) conv_i(Y_{j,b}).
  std::vector<double> slot(B_);
  for (std::size_t j = 0; j < r; ++j) {
    std::fill(slot.begin(), slot.end(), 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      const double coef = -2.0 * truth_.weight(i) * truth_.weight(j) / static_cast<double>(B_);
      const double kappa_i = truth_.component(i).kappa;
      const double pref = lcx + truth_.log_norm_const(i);
      const double* dots = comp_dots_.data() + (j * r + i) * B_;
      for (std::size_t b = 0; b < B_; ++b) {
        slot[b] += coef * std::exp(pref - logc_(combined_norm(x, kappa_i, dots[b])));
      }
    }
    double mean = 0.0;
    for (double v : slot) mean += v;
    mean /= static_cast<double>(B_);
    double var = 0.0;
    for (double v : slot) var += (v - mean) * (v - mean);
    var /= static_cast<double>(B_ - 1);
    var_total += var * static_cast<double>(B_);  // Var of sum of B iid slot terms
  }

  // Pair draw sets feed the (1 - 1/n) p^T Psi2 p term; the two strata of
  // each pair are averaged separately.
  for (std::size_t i = 0; i < r; ++i) {
    const double kappa_i = truth_.component(i).kappa;
    const double lc_i = truth_.log_norm_const(i);
    const double a_i = lc_i + kappa_i;
    for (std::size_t j = i; j < r; ++j) {
      const double kappa_j = truth_.component(j).kappa;
      const double lc_j = truth_.log_norm_const(j);
      const double a_j = lc_j + kappa_j;
      const double coef = (1.0 - inv_n) * truth_.weight(i) * truth_.weight(j) * (i == j ? 1.0 : 2.0);
      const std::size_t p = pair_index(i, j);
      const double* ti = pair_dots_i_.data() + p * B_;
      const double* tj = pair_dots_j_.data() + p * B_;
      const std::size_t half = B_ / 2;
      double stratum_var = 0.0;
      for (int stratum = 0; stratum < 2; ++stratum) {
        const std::size_t lo = (stratum == 0) ? 0 : half;
        const std::size_t hi_b = (stratum == 0) ? half : B_;
        const std::size_t m = hi_b - lo;
        if (m < 2) continue;
        double mean = 0.0, sq = 0.0;
        for (std::size_t b = lo; b < hi_b; ++b) {
          const double log_conv_i = lcx + lc_i - logc_(combined_norm(x, kappa_i, ti[b]));
          const double log_conv_j = lcx + lc_j - logc_(combined_norm(x, kappa_j, tj[b]));
          const double li = a_i + kappa_i * (ti[b] - 1.0);
          const double lj = a_j + kappa_j * (tj[b] - 1.0);
          const double top = std::max(li, lj);
          const double log_mix = top + std::log(0.5 * (std::exp(li - top) + std::exp(lj - top)));
          const double v = coef * std::exp(log_conv_i + log_conv_j - log_mix);
          mean += v;
          sq += v * v;
        }
        mean /= static_cast<double>(m);
        const double var = (sq / static_cast<double>(m) - mean * mean) * static_cast<double>(m) /
                           static_cast<double>(m - 1);
        // This stratum's mean enters with weight m/B.
        const double w = static_cast<double>(m) / static_cast<double>(B_);
        stratum_var += w * w * var / static_cast<double>(m);
      }
      var_total += stratum_var;
    }
  }
  return std::sqrt(var_total);
}

double RiskEvaluator::integrated_squared_bias(double h) const {
  const auto p1 = psi1(h);
  const auto p2 = psi2(h);
  const std::size_t r = truth_.size();
  std::vector<double> combo(r * r);
  for (std::size_t k = 0; k < r * r; ++k) combo[k] = p2[k] - 2.0 * p1[k] + psi0_[k];
  return quadratic_form(combo);
}

double RiskEvaluator::mise_at_infinity() const {
  return quadratic_form(psi0_) - std::exp(-specfun::log_surface_area(dim()));
}

RiskEvaluator build_risk_evaluator(const vmf::VmfMixture& truth, std::size_t n, std::size_t is_draws,
                                   std::mt19937_64& rng) {
  return RiskEvaluator(truth, n, is_draws, rng);
}

double exact_mise(const RiskEvaluator& ev, double h) { return ev.exact_mise(h); }

double mise_at_infinity(const vmf::VmfMixture& truth) {
  return vmf::roughness(truth) - std::exp(-specfun::log_surface_area(truth.dim()));
}

double amise(int d, std::size_t n, double curvature, double h) {
  if (d < 1) throw std::invalid_argument("amise: d must be >= 1");
  if (n == 0) throw std::invalid_argument("amise: n must be >= 1");
  if (h == kInf) return curvature > 0.0 ? kInf : 0.0;
  if (!(h > 0.0)) throw std::invalid_argument("amise: bandwidth must be positive");
  const double v_d = std::pow(2.0 * std::sqrt(std::numbers::pi), -d);
  return v_d / (static_cast<double>(n) * std::pow(h, d)) + 0.25 * curvature * std::pow(h, 4);
}

double h_amise(int d, std::size_t n, double curvature) {
  if (d < 1) throw std::invalid_argument("h_amise: d must be >= 1");
  if (n == 0) throw std::invalid_argument("h_amise: n must be >= 1");
  if (!(curvature > 0.0)) return kInf;
  const double v_d = std::pow(2.0 * std::sqrt(std::numbers::pi), -d);
  return std::pow(d * v_d / curvature, 1.0 / (d + 4.0)) * std::pow(static_cast<double>(n), -1.0 / (d + 4.0));
}

double exact_ise(const kde::KdeModel& model, const vmf::VmfMixture& truth) {
  if (model.dim() != truth.dim()) throw std::invalid_argument("exact_ise: dimension mismatch");
  const int d = truth.dim();
  const double inv_omega = std::exp(-specfun::log_surface_area(d));
  const double roughness_f = vmf::roughness(truth);
  if (model.is_uniform()) {
    return roughness_f - inv_omega;  // int (1/omega - f)^2
  }
  const auto& sample = model.sample();
  const std::size_t n = sample.size();
  if (n > kExactIseMaxN) {
    throw std::invalid_argument("exact_ise: sample too large for the O(n^2) path; use is_ise");
  }
  const double x = 1.0 / (model.bandwidth() * model.bandwidth());
  specfun::LogCvmf logc(d);
  const double lcx = logc(x);

  // int fhat^2 = (c(x)^2 / n^2) sum_{i,j} 1 / c(x ||X_i + X_j||).
  double sum_hat2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = sample.point(i);
    sum_hat2 += std::exp(2.0 * lcx - logc(2.0 * x));  // diagonal: ||X_i + X_i|| = 2
    for (std::size_t j = i + 1; j < n; ++j) {
      auto xj = sample.point(j);
      double t = 0.0;
      for (int k = 0; k <= d; ++k) t += xi[static_cast<std::size_t>(k)] * xj[static_cast<std::size_t>(k)];
      const double s = combined_norm(x, x, t);
      sum_hat2 += 2.0 * std::exp(2.0 * lcx - logc(s));
    }
  }
  sum_hat2 /= static_cast<double>(n) * static_cast<double>(n);

  // int fhat f = (1/n) sum_i sum_j p_j c(x) c(kappa_j) / c(||x X_i + kappa_j mu_j||).
  double sum_cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = sample.point(i);
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const auto& cj = truth.component(j);
      if (truth.weight(j) == 0.0) continue;
      const double t = cj.mu.dot(xi);
      const double s = combined_norm(x, cj.kappa, t);
      sum_cross += truth.weight(j) * std::exp(lcx + truth.log_norm_const(j) - logc(s));
    }
  }
  sum_cross /= static_cast<double>(n);

  return sum_hat2 - 2.0 * sum_cross + roughness_f;
}

double is_ise(const kde::KdeModel& model, const vmf::VmfMixture& truth, std::size_t is_draws,
              std::mt19937_64& rng) {
  if (model.dim() != truth.dim()) throw std::invalid_argument("is_ise: dimension mismatch");
  if (is_draws == 0) throw std::invalid_argument("is_ise: is_draws must be >= 1");
  auto draws = vmf::sample(truth, is_draws, rng);
  double acc = 0.0;
  for (std::size_t b = 0; b < is_draws; ++b) {
    auto y = draws.point(b);
    const double log_g = truth.log_density(y);
    const double g = std::exp(log_g);
    const double fhat = model.evaluate(y);
    const double diff = fhat - g;
    acc += diff * diff / g;
  }
  return acc / static_cast<double>(is_draws);
}

}  // namespace sphkde::risk
