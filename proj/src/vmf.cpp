#include "sphkde/vmf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sphkde/specfun.hpp"
#include "sphkde/util.hpp"

namespace sphkde::vmf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

VmfMixture::VmfMixture(std::vector<VmfComponent> components, std::vector<double> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty()) throw std::invalid_argument("VmfMixture: needs at least one component");
  if (weights_.size() != components_.size()) {
    throw std::invalid_argument("VmfMixture: weights/components size mismatch");
  }
  d_ = components_.front().mu.dim();
  double total = 0.0;
  for (std::size_t j = 0; j < components_.size(); ++j) {
    if (components_[j].mu.dim() != d_) throw std::invalid_argument("VmfMixture: components must share one dimension");
    if (!(components_[j].kappa >= 0.0) || !std::isfinite(components_[j].kappa)) {
      throw std::invalid_argument("VmfMixture: kappa must be finite and >= 0");
    }
    if (!(weights_[j] >= 0.0)) throw std::invalid_argument("VmfMixture: weights must be >= 0");
    total += weights_[j];
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("VmfMixture: weights must sum to 1 within 1e-12");
  for (double& w : weights_) w /= total;

  log_c_.resize(components_.size());
  log_w_pref_.resize(components_.size());
  for (std::size_t j = 0; j < components_.size(); ++j) {
    log_c_[j] = specfun::log_c_vmf(d_, components_[j].kappa);
    log_w_pref_[j] = (weights_[j] > 0.0)
                         ? std::log(weights_[j]) + log_c_[j] + components_[j].kappa
                         : kNegInf;
  }
}

VmfMixture VmfMixture::single(sphere::UnitVector mu, double kappa) {
  std::vector<VmfComponent> comps;
  comps.push_back({std::move(mu), kappa});
  return VmfMixture(std::move(comps), {1.0});
}

double VmfMixture::log_density(std::span<const double> x) const {
  // Per component log(p c e^{kappa t}) = log p + log c + kappa + kappa (t - 1);
  // the recentred exponent is <= 0, so each term is bounded by its prefactor.
  double best = kNegInf;
  double terms[8];
  std::vector<double> heap_terms;
  double* t = terms;
  if (components_.size() > 8) {
    heap_terms.resize(components_.size());
    t = heap_terms.data();
  }
  for (std::size_t j = 0; j < components_.size(); ++j) {
    if (weights_[j] == 0.0) {
      t[j] = kNegInf;
      continue;
    }
    const double dot = components_[j].mu.dot(x);
    t[j] = log_w_pref_[j] + components_[j].kappa * (dot - 1.0);
    best = std::max(best, t[j]);
  }
  if (best == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t j = 0; j < components_.size(); ++j) s += std::exp(t[j] - best);
  return best + std::log(s);
}

double VmfMixture::density(std::span<const double> x) const { return std::exp(log_density(x)); }

double log_density(const VmfMixture& mix, const sphere::UnitVector& x) { return mix.log_density(x); }

sphere::SphericalSample sample(const VmfMixture& mix, std::size_t n, std::mt19937_64& rng) {
  const int d = mix.dim();
  for (std::size_t j = 0; j < mix.size(); ++j) {
    if (mix.component(j).kappa > kMaxSampleKappa) {
      throw std::domain_error("vmf::sample: kappa exceeds the sampler's numeric design range");
    }
  }

  // Per-component Wood constants and tangent frames.
  struct Comp {
    double kappa, b, x0, c;
    std::vector<double> frame;  // (d+1) x d
    const sphere::UnitVector* mu;
  };
  std::vector<Comp> comps(mix.size());
  for (std::size_t j = 0; j < mix.size(); ++j) {
    const auto& cj = mix.component(j);
    const double kappa = cj.kappa;
    Comp& c = comps[j];
    c.kappa = kappa;
    c.b = d / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + static_cast<double>(d) * d));
    c.x0 = (1.0 - c.b) / (1.0 + c.b);
    c.c = kappa * c.x0 + d * std::log1p(-c.x0 * c.x0);
    c.frame = sphere::tangent_frame(cj.mu);
    c.mu = &cj.mu;
  }
  std::vector<double> cumw(mix.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < mix.size(); ++j) {
    acc += mix.weight(j);
    cumw[j] = acc;
  }
  cumw.back() = 1.0;

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::gamma_distribution<double> gamma_half_d(0.5 * d, 1.0);

  sphere::SphericalSample out(d, n);
  std::vector<double> xi(static_cast<std::size_t>(d));
  std::vector<double> point(static_cast<std::size_t>(d) + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = unif(rng);
    std::size_t j = static_cast<std::size_t>(std::lower_bound(cumw.begin(), cumw.end(), u) - cumw.begin());
    const Comp& c = comps[j];

    double t = 1.0;
    for (;;) {
      const double g1 = gamma_half_d(rng);
      const double g2 = gamma_half_d(rng);
      const double z = g1 / (g1 + g2);  // Beta(d/2, d/2)
      t = (1.0 - (1.0 + c.b) * z) / (1.0 - (1.0 - c.b) * z);
      const double logu = std::log(unif(rng));
      if (c.kappa * t + d * std::log1p(-c.x0 * t) - c.c >= logu) break;
    }

    // Uniform direction in the tangent space.
    double r2 = 0.0;
    do {
      r2 = 0.0;
      for (double& v : xi) {
        v = gauss(rng);
        r2 += v * v;
      }
    } while (r2 < 1e-24);
    const double inv_r = 1.0 / std::sqrt(r2);
    const double s = std::sqrt(std::max(0.0, 1.0 - t * t));
    for (int row = 0; row <= d; ++row) {
      double tang = 0.0;
      for (int col = 0; col < d; ++col) tang += c.frame[static_cast<std::size_t>(row) * d + col] * xi[static_cast<std::size_t>(col)];
      point[static_cast<std::size_t>(row)] = t * (*c.mu)[static_cast<std::size_t>(row)] + s * inv_r * tang;
    }
    out.set(i, std::span<const double>(point));
  }
  return out;
}

double mean_resultant_ratio(int d, double kappa) {
  if (d < 1) throw std::invalid_argument("mean_resultant_ratio: d must be >= 1");
  if (!(kappa >= 0.0)) throw std::invalid_argument("mean_resultant_ratio: kappa must be >= 0");
  if (kappa == 0.0) return 0.0;
  return specfun::scaled_bessel_ratio(0.5 * (d - 1), kappa);
}

double solve_concentration(int d, double rbar) {
  if (d < 1) throw std::invalid_argument("solve_concentration: d must be >= 1");
  if (!(rbar >= 0.0) || rbar >= 1.0 - 1e-12) {
    throw std::runtime_error("solve_concentration: degenerate concentration (rbar >= 1 - 1e-12)");
  }
  if (rbar == 0.0) return 0.0;

  const double tol = 1e-10;
  // Banerjee's approximation is already within a few percent.
  double kappa = rbar * (d + 1.0 - rbar * rbar) / (1.0 - rbar * rbar);
  kappa = std::max(kappa, 1e-12);

  // Bracket for the bisection fallback; A_d is increasing from 0 to 1.
  double lo = 0.0;
  double hi = std::max(2.0 * kappa, 1.0);
  while (mean_resultant_ratio(d, hi) < rbar) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw std::runtime_error("solve_concentration: failed to bracket");
  }

  for (int iter = 0; iter < 100; ++iter) {
    const double a = mean_resultant_ratio(d, kappa);
    const double err = a - rbar;
    if (std::abs(err) <= tol) return kappa;
    if (err > 0.0) {
      hi = std::min(hi, kappa);
    } else {
      lo = std::max(lo, kappa);
    }
    const double deriv = 1.0 - a * a - (d / kappa) * a;
    double next = kappa - err / deriv;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    kappa = next;
  }
  return kappa;  // bisection has converged well past tol by now
}

VmfComponent fit_mle_single(const sphere::SphericalSample& sample) {
  const int d = sample.dim();
  const std::size_t n = sample.size();
  if (n == 0) throw std::invalid_argument("fit_mle_single: empty sample");
  std::vector<double> mean(static_cast<std::size_t>(d) + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = sample.point(i);
    for (int k = 0; k <= d; ++k) mean[static_cast<std::size_t>(k)] += p[static_cast<std::size_t>(k)];
  }
  double norm = 0.0;
  for (double& c : mean) {
    c /= static_cast<double>(n);
    norm += c * c;
  }
  norm = std::sqrt(norm);
  if (norm < 1e-300) {
    return {sphere::UnitVector::axis(d, 0), 0.0};
  }
  const double kappa = solve_concentration(d, norm);
  for (double& c : mean) c /= norm;
  return {sphere::UnitVector(std::move(mean)), kappa};
}

namespace {

struct EmRun {
  VmfMixture mixture;
  double loglik;
  int iterations;
  bool converged;
  std::vector<double> trace;
};

EmRun run_em_once(const sphere::SphericalSample& data, std::size_t r, int max_iter, std::mt19937_64& rng) {
  const int d = data.dim();
  const std::size_t n = data.size();
  const int m = d + 1;

  // Initialization: r distinct sample points as means, kappa = 1, uniform weights.
  std::vector<std::size_t> idx;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (idx.size() < r) {
    const std::size_t cand = pick(rng);
    if (std::find(idx.begin(), idx.end(), cand) == idx.end()) idx.push_back(cand);
  }
  std::vector<double> mus(r * static_cast<std::size_t>(m));
  std::vector<double> kappas(r, 1.0);
  std::vector<double> weights(r, 1.0 / static_cast<double>(r));
  for (std::size_t j = 0; j < r; ++j) {
    auto p = data.point(idx[j]);
    for (int k = 0; k < m; ++k) mus[j * m + static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k)];
  }

  std::vector<double> log_pref(r);     // log p_j + log c(kappa_j) + kappa_j
  std::vector<double> resp(n * r);     // responsibilities
  std::vector<double> scores(r);
  std::vector<double> trace;
  double loglik = kNegInf;
  double prev = kNegInf;
  bool converged = false;
  int iters = 0;

  auto refresh_pref = [&]() {
    for (std::size_t j = 0; j < r; ++j) {
      log_pref[j] = (weights[j] > 0.0)
                        ? std::log(weights[j]) + specfun::log_c_vmf(d, kappas[j]) + kappas[j]
                        : kNegInf;
    }
  };
  refresh_pref();

  for (int iter = 0; iter < max_iter; ++iter) {
    // E-step and log-likelihood in one pass.
    loglik = 0.0;
    std::size_t worst_i = 0;
    double worst_li = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      auto x = data.point(i);
      double best = kNegInf;
      for (std::size_t j = 0; j < r; ++j) {
        double dot = 0.0;
        const double* mu = mus.data() + j * m;
        for (int k = 0; k < m; ++k) dot += mu[k] * x[static_cast<std::size_t>(k)];
        scores[j] = log_pref[j] + kappas[j] * (dot - 1.0);
        best = std::max(best, scores[j]);
      }
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) s += std::exp(scores[j] - best);
      const double li = best + std::log(s);
      loglik += li;
      if (li < worst_li) {
        worst_li = li;
        worst_i = i;
      }
      // scores[j] - li is the log responsibility.
      for (std::size_t j = 0; j < r; ++j) resp[i * r + j] = std::exp(scores[j] - li);
    }
    trace.push_back(loglik);
    if (iter > 0 && loglik - prev <= 1e-8 * (1.0 + std::abs(loglik))) {
      converged = true;
      break;
    }
    prev = loglik;
    ++iters;

    // M-step.
    for (std::size_t j = 0; j < r; ++j) {
      double wj = 0.0;
      double max_resp = 0.0;
      std::vector<double> mvec(static_cast<std::size_t>(m), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = resp[i * r + j];
        wj += g;
        max_resp = std::max(max_resp, g);
        auto x = data.point(i);
        for (int k = 0; k < m; ++k) mvec[static_cast<std::size_t>(k)] += g * x[static_cast<std::size_t>(k)];
      }
      if (max_resp < 1e-12) {
        // Re-seed a starved component from the point the model explains worst.
        auto x = data.point(worst_i);
        for (int k = 0; k < m; ++k) mus[j * m + static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k)];
        kappas[j] = 1.0;
        weights[j] = 1.0 / static_cast<double>(n);
        continue;
      }
      weights[j] = wj / static_cast<double>(n);
      double norm = 0.0;
      for (double c : mvec) norm += c * c;
      norm = std::sqrt(norm);
      if (norm > 1e-300) {
        for (int k = 0; k < m; ++k) mus[j * m + static_cast<std::size_t>(k)] = mvec[static_cast<std::size_t>(k)] / norm;
        // Clamp keeps the concentration solve away from its degenerate branch.
        const double rbar = std::min(norm / wj, 1.0 - 1e-9);
        kappas[j] = solve_concentration(d, rbar);
      } else {
        kappas[j] = 0.0;
      }
    }
    double wtot = 0.0;
    for (double w : weights) wtot += w;
    for (double& w : weights) w /= wtot;
    refresh_pref();
  }

  std::vector<VmfComponent> comps;
  comps.reserve(r);
  for (std::size_t j = 0; j < r; ++j) {
    std::vector<double> mu(mus.begin() + static_cast<std::ptrdiff_t>(j * m),
                           mus.begin() + static_cast<std::ptrdiff_t>((j + 1) * m));
    comps.push_back({sphere::UnitVector(std::move(mu)), kappas[j]});
  }
  return {VmfMixture(std::move(comps), std::move(weights)), loglik, iters, converged, std::move(trace)};
}

}  // namespace

FitReport fit_em(const sphere::SphericalSample& data, std::size_t r, std::mt19937_64& rng,
                 int runs, int max_iter) {
  if (r == 0) throw std::invalid_argument("fit_em: r must be >= 1");
  if (data.size() < r) throw std::invalid_argument("fit_em: sample smaller than component count");
  if (runs < 1 || max_iter < 1) throw std::invalid_argument("fit_em: runs and max_iter must be >= 1");

  const std::uint64_t base = rng();
  EmRun* best = nullptr;
  std::vector<EmRun> all;
  all.reserve(static_cast<std::size_t>(runs));
  for (int run = 0; run < runs; ++run) {
    auto run_rng = util::make_rng(base, {static_cast<std::uint64_t>(run)});
    all.push_back(run_em_once(data, r, max_iter, run_rng));
    if (!best || all.back().loglik > best->loglik) best = &all.back();
  }
  return {best->mixture, best->loglik, best->iterations, best->converged, best->trace};
}

double roughness(const VmfMixture& mix) {
  const int d = mix.dim();
  const std::size_t r = mix.size();
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    const auto& ci = mix.component(i);
    for (std::size_t j = 0; j < r; ++j) {
      const auto& cj = mix.component(j);
      const double w = mix.weight(i) * mix.weight(j);
      if (w == 0.0) continue;
      const double t = ci.mu.dot(cj.mu);
      const double s = std::sqrt(std::max(
          0.0, ci.kappa * ci.kappa + cj.kappa * cj.kappa + 2.0 * ci.kappa * cj.kappa * t));
      total += w * std::exp(mix.log_norm_const(i) + mix.log_norm_const(j) - specfun::log_c_vmf(d, s));
    }
  }
  return total;
}

double laplacian_radial(const VmfMixture& mix, std::span<const double> x) {
  const int d = mix.dim();
  double total = 0.0;
  for (std::size_t j = 0; j < mix.size(); ++j) {
    const auto& c = mix.component(j);
    const double w = mix.weight(j);
    if (w == 0.0 || c.kappa == 0.0) continue;
    const double t = c.mu.dot(x);
    // Recentred density value: c e^{kappa t} = exp(log c + kappa + kappa (t-1)).
    const double dens = std::exp(mix.log_norm_const(j) + c.kappa + c.kappa * (t - 1.0));
    total += w * dens * (c.kappa * c.kappa * (1.0 - t * t) - d * c.kappa * t);
  }
  return total;
}

double laplacian_radial(const VmfMixture& mix, const sphere::UnitVector& x) {
  return laplacian_radial(mix, std::span<const double>(x.coords()));
}

namespace {

double curvature_single_closed(int d, double kappa) {
  if (kappa == 0.0) return 0.0;
  const double nu = 0.5 * (d - 1);
  const double l1 = specfun::log_scaled_bessel_i(nu + 1.0, 2.0 * kappa);
  const double l2 = specfun::log_scaled_bessel_i(nu + 2.0, 2.0 * kappa);
  const double ln = specfun::log_scaled_bessel_i(nu, kappa);
  // The e^{2 kappa} factors cancel between numerator and denominator.
  const double log_common = std::log(static_cast<double>(d)) + 0.5 * (d + 1) * std::log(kappa) -
                            (d + 2) * std::numbers::ln2 - 0.5 * (d + 1) * std::log(std::numbers::pi) -
                            2.0 * ln;
  const double a = std::log(2.0 * d) + l1;
  const double b = std::log((d + 2.0) * kappa) + l2;
  const double hi = std::max(a, b);
  const double log_bracket = hi + std::log(std::exp(a - hi) + std::exp(b - hi));
  return std::exp(log_common + log_bracket);
}

double curvature_quadrature(const VmfMixture& mix) {
  const int d = mix.dim();
  double kmax = 0.0;
  for (std::size_t j = 0; j < mix.size(); ++j) kmax = std::max(kmax, mix.component(j).kappa);
  int m = 0;
  if (d == 1) {
    m = std::clamp(static_cast<int>(32.0 * std::ceil(kmax)), 4096, 1 << 17);
  } else {
    m = std::clamp(static_cast<int>(4.0 * std::ceil(kmax)), 256, 4096);
  }
  auto rule = sphere::quadrature(d, m);
  double total = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double v = laplacian_radial(mix, std::span<const double>(rule.nodes[i]));
    total += rule.weights[i] * v * v;
  }
  return total;
}

}  // namespace

double curvature_functional(const VmfMixture& mix) {
  bool all_zero = true;
  for (std::size_t j = 0; j < mix.size(); ++j) {
    if (mix.component(j).kappa > 0.0) all_zero = false;
  }
  if (all_zero) return 0.0;
  if (mix.size() == 1) return curvature_single_closed(mix.dim(), mix.component(0).kappa);
  if (mix.dim() <= 2) return curvature_quadrature(mix);
  throw std::invalid_argument("curvature_functional: mixtures with d >= 3 need an rng (Monte Carlo path)");
}

double curvature_functional(const VmfMixture& mix, std::mt19937_64& rng, std::size_t is_draws) {
  bool all_zero = true;
  for (std::size_t j = 0; j < mix.size(); ++j) {
    if (mix.component(j).kappa > 0.0) all_zero = false;
  }
  if (all_zero) return 0.0;
  if (mix.size() == 1 || mix.dim() <= 2) return curvature_functional(mix);
  return curvature_monte_carlo(mix, rng, is_draws);
}

double curvature_monte_carlo(const VmfMixture& mix, std::mt19937_64& rng, std::size_t is_draws) {
  if (is_draws == 0) throw std::invalid_argument("curvature_monte_carlo: is_draws must be >= 1");
  // Importance sampling with the mixture itself as proposal:
  // int Delta^2 = E_g[Delta(Y)^2 / g(Y)].
  auto draws = sample(mix, is_draws, rng);
  double total = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    auto y = draws.point(i);
    const double v = laplacian_radial(mix, y);
    total += v * v * std::exp(-mix.log_density(y));
  }
  return total / static_cast<double>(is_draws);
}

VmfMixture parse_mixture_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("mixture config: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("d") || !j.contains("mu") || !j.contains("kappa") || !j.contains("p")) {
    throw std::runtime_error("mixture config: need fields d, mu, kappa, p");
  }
  const int d = j.at("d").get<int>();
  if (d < 1) throw std::runtime_error("mixture config: d must be >= 1");
  const auto& mu = j.at("mu");
  const auto& kappa = j.at("kappa");
  const auto& p = j.at("p");
  if (!mu.is_array() || !kappa.is_array() || !p.is_array() || mu.size() != kappa.size() || mu.size() != p.size() || mu.empty()) {
    throw std::runtime_error("mixture config: mu, kappa, p must be equal-length nonempty arrays");
  }
  std::vector<VmfComponent> comps;
  std::vector<double> weights;
  comps.reserve(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!mu[i].is_array() || static_cast<int>(mu[i].size()) != d + 1) {
      throw std::runtime_error("mixture config: each mu row must have d+1 entries");
    }
    std::vector<double> coords = mu[i].get<std::vector<double>>();
    double kap = kappa[i].get<double>();
    try {
      comps.push_back({sphere::UnitVector(std::move(coords)), kap});
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(std::string("mixture config: bad mean direction: ") + e.what());
    }
    weights.push_back(p[i].get<double>());
  }
  try {
    return VmfMixture(std::move(comps), std::move(weights));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("mixture config: ") + e.what());
  }
}

VmfMixture load_mixture_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mixture_json: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mixture_json(ss.str());
}

std::string mixture_to_json(const VmfMixture& mix) {
  nlohmann::json j;
  j["d"] = mix.dim();
  auto mu = nlohmann::json::array();
  auto kappa = nlohmann::json::array();
  auto p = nlohmann::json::array();
  for (std::size_t i = 0; i < mix.size(); ++i) {
    mu.push_back(mix.component(i).mu.coords());
    kappa.push_back(mix.component(i).kappa);
    p.push_back(mix.weight(i));
  }
  j["mu"] = mu;
  j["kappa"] = kappa;
  j["p"] = p;
  return j.dump(2);
}

}  // namespace sphkde::vmf
