#include "sphkde/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "sphkde/cv.hpp"
#include "sphkde/kde.hpp"
#include "sphkde/risk.hpp"
#include "sphkde/specfun.hpp"

namespace sphkde::optimize {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxRefineIters = 200;

[[noreturn]] void throw_nan(double h) {
  std::ostringstream os;
  os.precision(12);
  os << "minimize_1d: criterion returned NaN at h = " << h;
  throw std::runtime_error(os.str());
}

}  // namespace

std::vector<double> default_cv_grid() {
  std::vector<double> grid(23);
  for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = 0.005 + 0.025 * static_cast<double>(k);
  return grid;
}

std::vector<double> mise_grid(double h_pilot) {
  if (!(h_pilot > 0.0) || !std::isfinite(h_pilot))
    throw std::invalid_argument("mise_grid: pilot bandwidth must be finite and positive");
  std::vector<double> grid(31);
  for (std::size_t k = 0; k < grid.size(); ++k)
    grid[k] = (0.5 + 0.05 * static_cast<double>(k)) * h_pilot;
  return grid;
}

SelectorResult minimize_1d(const std::function<double(double)>& criterion,
                           const std::vector<double>& grid, double rel_tol) {
  if (grid.empty()) throw std::invalid_argument("minimize_1d: empty bandwidth grid");
  std::vector<double> g(grid);
  std::sort(g.begin(), g.end());
  if (!(g.front() > 0.0) || !std::isfinite(g.back()))
    throw std::invalid_argument("minimize_1d: grid bandwidths must be finite and positive");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("minimize_1d: rel_tol must be positive");

  // Every criterion call funnels through here so the returned minimum is the
  // best value seen anywhere, grid nodes included.
  double best_h = g.front();
  double best_v = kInf;
  auto eval = [&](double h) {
    double v = criterion(h);
    if (std::isnan(v)) throw_nan(h);
    if (v < best_v) {
      best_v = v;
      best_h = h;
    }
    return v;
  };

  const std::size_t m = g.size();
  std::size_t winner = 0;
  double winner_v = kInf;
  for (std::size_t i = 0; i < m; ++i) {
    double v = eval(g[i]);
    if (v < winner_v) {
      winner_v = v;
      winner = i;
    }
  }

  SelectorResult res;
  res.grid_winner = g[winner];

  // Bracket around the winning node; an endpoint winner widens the search
  // once by a factor of two on the open side.
  double lo, hi;
  if (m == 1) {
    lo = 0.5 * g[0];
    hi = 2.0 * g[0];
  } else if (winner == 0) {
    lo = 0.5 * g[0];
    hi = g[1];
  } else if (winner == m - 1) {
    lo = g[m - 2];
    hi = 2.0 * g[m - 1];
  } else {
    lo = g[winner - 1];
    hi = g[winner + 1];
  }

  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c1 = b - gr * (b - a);
  double c2 = a + gr * (b - a);
  double f1 = eval(c1);
  double f2 = eval(c2);
  int iters = 0;
  while (b - a > rel_tol * b && iters < kMaxRefineIters) {
    if (f1 < f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - gr * (b - a);
      f1 = eval(c1);
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + gr * (b - a);
      f2 = eval(c2);
    }
    ++iters;
  }

  res.h = best_h;
  res.criterion_value = best_v;
  res.refine_iterations = iters;
  res.converged = (b - a) <= rel_tol * b;
  const double step_left = (m >= 2) ? g[1] - g[0] : 0.5 * g[0];
  const double step_right = (m >= 2) ? g[m - 1] - g[m - 2] : g[0];
  res.boundary_flag = (res.h < g.front() + step_left) || (res.h > g.back() - step_right);
  return res;
}

SelectorResult select_cv(const sphere::SphericalSample& sample, unsigned n_threads) {
  return select_cv(sample, default_cv_grid(), n_threads);
}

SelectorResult select_cv(const sphere::SphericalSample& sample, const std::vector<double>& grid,
                         unsigned n_threads) {
  cv::GramCache cache(sample);
  auto criterion = [&](double h) { return cv::cv_loss(cache, h, n_threads); };
  SelectorResult res = minimize_1d(criterion, grid);
  res.method = Method::kCv;
  return res;
}

namespace {

SelectorResult ami_from_curvature(const vmf::VmfMixture& theta, std::size_t n, double curvature) {
  SelectorResult res;
  res.method = Method::kAmi;
  res.h = risk::h_amise(theta.dim(), n, curvature);
  res.criterion_value = std::isinf(res.h) ? 0.0 : risk::amise(theta.dim(), n, curvature, res.h);
  res.grid_winner = res.h;
  res.refine_iterations = 0;
  res.converged = true;
  res.boundary_flag = std::isinf(res.h);
  return res;
}

vmf::VmfMixture fit_mixture(const sphere::SphericalSample& sample, std::size_t r,
                            std::mt19937_64& rng) {
  if (r <= 1) {
    vmf::VmfComponent comp = vmf::fit_mle_single(sample);
    return vmf::VmfMixture::single(comp.mu, comp.kappa);
  }
  return vmf::fit_em(sample, r, rng).mixture;
}

//! Shared core of the exact-MISE plug-in and the MISE oracle: pilot on the
//! mixture's asymptotic bandwidth, refine the exact MISE over its multiples,
//! and let the uniform limit win outright when it is smaller.
SelectorResult minimize_exact_mise(const vmf::VmfMixture& theta, std::size_t n,
                                   std::mt19937_64& rng, std::size_t is_draws, Method method) {
  SelectorResult ami = ami_for_mixture(theta, n, rng);
  if (std::isinf(ami.h)) {
    SelectorResult res;
    res.method = method;
    res.h = kInf;
    res.criterion_value = risk::mise_at_infinity(theta);
    res.grid_winner = kInf;
    res.refine_iterations = 0;
    res.converged = true;
    res.boundary_flag = true;
    return res;
  }

  risk::RiskEvaluator ev(theta, n, is_draws, rng);
  auto criterion = [&](double h) { return ev.exact_mise(h); };
  SelectorResult res = minimize_1d(criterion, mise_grid(ami.h));
  res.method = method;
  double at_inf = ev.mise_at_infinity();
  if (at_inf < res.criterion_value) {
    res.h = kInf;
    res.criterion_value = at_inf;
    res.boundary_flag = true;
  }
  return res;
}

}  // namespace

SelectorResult ami_for_mixture(const vmf::VmfMixture& theta, std::size_t n) {
  return ami_from_curvature(theta, n, vmf::curvature_functional(theta));
}

SelectorResult ami_for_mixture(const vmf::VmfMixture& theta, std::size_t n, std::mt19937_64& rng) {
  if (theta.dim() <= 2 || theta.size() == 1)
    return ami_from_curvature(theta, n, vmf::curvature_functional(theta));
  return ami_from_curvature(theta, n, vmf::curvature_functional(theta, rng));
}

SelectorResult select_ami(const sphere::SphericalSample& sample) {
  vmf::VmfComponent comp = vmf::fit_mle_single(sample);
  return ami_for_mixture(vmf::VmfMixture::single(comp.mu, comp.kappa), sample.size());
}

SelectorResult select_ami(const sphere::SphericalSample& sample, std::size_t r,
                          std::mt19937_64& rng) {
  vmf::VmfMixture theta = fit_mixture(sample, r, rng);
  return ami_for_mixture(theta, sample.size(), rng);
}

SelectorResult emi_for_mixture(const vmf::VmfMixture& theta, std::size_t n, std::mt19937_64& rng,
                               std::size_t is_draws) {
  return minimize_exact_mise(theta, n, rng, is_draws, Method::kEmi);
}

SelectorResult select_emi(const sphere::SphericalSample& sample, std::mt19937_64& rng,
                          std::size_t r, std::size_t is_draws) {
  vmf::VmfMixture theta = fit_mixture(sample, r, rng);
  return emi_for_mixture(theta, sample.size(), rng, is_draws);
}

SelectorResult select_mise_oracle(const vmf::VmfMixture& truth, std::size_t n,
                                  std::mt19937_64& rng, std::size_t is_draws) {
  return minimize_exact_mise(truth, n, rng, is_draws, Method::kMiseOracle);
}

SelectorResult select_ise_oracle(const sphere::SphericalSample& sample,
                                 const vmf::VmfMixture& truth, std::mt19937_64& rng,
                                 std::size_t is_draws) {
  if (sample.dim() != truth.dim())
    throw std::invalid_argument("select_ise_oracle: sample and truth dimension mismatch");
  const std::size_t n = sample.size();
  const int d = truth.dim();

  // ISE of the uniform limit model, valid for either evaluation path.
  const double ise_at_inf = vmf::roughness(truth) - 1.0 / specfun::surface_area(d);

  SelectorResult ami = ami_for_mixture(truth, n, rng);
  if (std::isinf(ami.h)) {
    SelectorResult res;
    res.method = Method::kIseOracle;
    res.h = kInf;
    res.criterion_value = ise_at_inf;
    res.grid_winner = kInf;
    res.refine_iterations = 0;
    res.converged = true;
    res.boundary_flag = true;
    return res;
  }

  std::function<double(double)> criterion;
  sphere::SphericalSample ys(d, 0);
  std::vector<double> gy;
  if (n <= risk::kExactIseMaxN) {
    criterion = [&](double h) { return risk::exact_ise(kde::KdeModel(sample, h), truth); };
  } else {
    // Freeze one importance-sample set so the criterion is deterministic and
    // smooth across the bandwidth sweep.
    ys = vmf::sample(truth, is_draws, rng);
    gy.resize(is_draws);
    for (std::size_t b = 0; b < is_draws; ++b) gy[b] = truth.density(ys.point(b));
    criterion = [&](double h) {
      kde::KdeModel model(sample, h);
      std::vector<double> fy = model.evaluate_batch(ys);
      double acc = 0.0;
      for (std::size_t b = 0; b < is_draws; ++b) {
        double diff = fy[b] - gy[b];
        acc += diff * diff / gy[b];
      }
      return acc / static_cast<double>(is_draws);
    };
  }

  SelectorResult res = minimize_1d(criterion, mise_grid(ami.h));
  res.method = Method::kIseOracle;
  if (ise_at_inf < res.criterion_value) {
    res.h = kInf;
    res.criterion_value = ise_at_inf;
    res.boundary_flag = true;
  }
  return res;
}

}  // namespace sphkde::optimize
