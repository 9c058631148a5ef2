#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphkde/cv.hpp"
#include "sphkde/optimize.hpp"
#include "sphkde/risk.hpp"
#include "sphkde/sphere.hpp"
#include "sphkde/util.hpp"
#include "sphkde/vmf.hpp"

using namespace sphkde;
using optimize::Method;
using optimize::SelectorResult;
using sphere::UnitVector;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> linear_grid(double lo, double hi, double step) {
  std::vector<double> g;
  for (double h = lo; h <= hi + 1e-12; h += step) g.push_back(h);
  return g;
}

//! Four antipodal components on the circle, nearly uniform in aggregate.
vmf::VmfMixture crossed_circle_mixture(double kappa) {
  std::vector<vmf::VmfComponent> comps = {
      {UnitVector(std::vector<double>{1.0, 0.0}), kappa},
      {UnitVector(std::vector<double>{-1.0, 0.0}), kappa},
      {UnitVector(std::vector<double>{0.0, 1.0}), kappa},
      {UnitVector(std::vector<double>{0.0, -1.0}), kappa},
  };
  return vmf::VmfMixture(comps, {0.25, 0.25, 0.25, 0.25});
}

}  // namespace

TEST_CASE("golden section refinement recovers a smooth interior minimum") {
  auto f = [](double h) { return (h - 0.3) * (h - 0.3); };
  auto grid = linear_grid(0.1, 1.0, 0.1);
  SelectorResult res = optimize::minimize_1d(f, grid);
  CHECK(res.h == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(res.grid_winner == doctest::Approx(0.3));
  CHECK(res.converged);
  CHECK_FALSE(res.boundary_flag);
  CHECK(res.refine_iterations > 10);
  CHECK(res.criterion_value < 1e-15);
  for (double h : grid) CHECK(res.criterion_value <= f(h));
}

TEST_CASE("asymptotic risk criterion minimizes at its closed form bandwidth") {
  const int d = 2;
  const std::size_t n = 1000;
  auto f = [&](double h) { return risk::amise(d, n, 1.0, h); };
  SelectorResult res = optimize::minimize_1d(f, linear_grid(0.02, 0.8, 0.02));
  CHECK(res.h == doctest::Approx(risk::h_amise(d, n, 1.0)).epsilon(1e-6));
  CHECK_FALSE(res.boundary_flag);
}

TEST_CASE("the refined minimum never exceeds any grid value") {
  auto f = [](double h) { return std::sin(25.0 * h) + h; };
  auto grid = linear_grid(0.03, 1.5, 0.037);
  SelectorResult res = optimize::minimize_1d(f, grid);
  double node_min = kInf;
  for (double h : grid) node_min = std::min(node_min, f(h));
  CHECK(res.criterion_value <= node_min);
  CHECK(res.criterion_value == doctest::Approx(f(res.h)));
}

TEST_CASE("a deeper distant well wins over a shallow nearby one") {
  auto well = [](double h, double c) {
    double z = (h - c) / 0.02;
    return std::exp(-z * z);
  };
  auto f = [&](double h) { return -well(h, 0.2) - 2.0 * well(h, 0.8); };
  SelectorResult res = optimize::minimize_1d(f, linear_grid(0.05, 1.0, 0.05));
  CHECK(res.h == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(res.criterion_value == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("a monotone criterion reports the expanded boundary and flags it") {
  SUBCASE("decreasing toward zero") {
    SelectorResult res = optimize::minimize_1d([](double h) { return h; }, linear_grid(0.1, 0.5, 0.1));
    CHECK(res.h < 0.1);
    CHECK(res.h == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(res.boundary_flag);
    CHECK(res.grid_winner == doctest::Approx(0.1));
  }
  SUBCASE("decreasing toward large bandwidths") {
    SelectorResult res =
        optimize::minimize_1d([](double h) { return 1.0 / h; }, linear_grid(0.1, 0.5, 0.1));
    CHECK(res.h > 0.5);
    CHECK(res.h == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.boundary_flag);
  }
}

TEST_CASE("grid resolution does not move a convex minimum") {
  auto f = [](double h) { return (h - 0.37) * (h - 0.37); };
  SelectorResult coarse = optimize::minimize_1d(f, linear_grid(0.1, 1.0, 0.1));
  SelectorResult fine = optimize::minimize_1d(f, linear_grid(0.05, 1.0, 0.025));
  CHECK(coarse.h == doctest::Approx(0.37).epsilon(1e-7));
  CHECK(fine.h == doctest::Approx(0.37).epsilon(1e-7));
  CHECK(coarse.h == doctest::Approx(fine.h).epsilon(2e-7));
}

TEST_CASE("invalid minimizer inputs are reported") {
  auto f = [](double h) { return h * h; };
  CHECK_THROWS_AS(optimize::minimize_1d(f, {}), std::invalid_argument);
  CHECK_THROWS_AS(optimize::minimize_1d(f, {0.0, 0.1}), std::invalid_argument);
  CHECK_THROWS_AS(optimize::minimize_1d(f, {-0.2, 0.1}), std::invalid_argument);
  CHECK_THROWS_AS(optimize::minimize_1d(f, {0.1, 0.2}, 0.0), std::invalid_argument);
  try {
    optimize::minimize_1d([](double) { return std::nan(""); }, {0.25});
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("h = 0.25") != std::string::npos);
  }
}

TEST_CASE("bandwidth grids have the documented shape") {
  auto cv_grid = optimize::default_cv_grid();
  REQUIRE(cv_grid.size() == 23);
  CHECK(cv_grid.front() == doctest::Approx(0.005));
  CHECK(cv_grid.back() == doctest::Approx(0.555));
  for (std::size_t k = 1; k < cv_grid.size(); ++k)
    CHECK(cv_grid[k] - cv_grid[k - 1] == doctest::Approx(0.025));

  auto mg = optimize::mise_grid(0.2);
  REQUIRE(mg.size() == 31);
  CHECK(mg.front() == doctest::Approx(0.1));
  CHECK(mg.back() == doctest::Approx(0.4));
  CHECK_THROWS_AS(optimize::mise_grid(kInf), std::invalid_argument);
  CHECK_THROWS_AS(optimize::mise_grid(-0.5), std::invalid_argument);
}

TEST_CASE("cross validation selection matches direct minimization of its loss") {
  auto rng = util::make_rng(31, {1});
  auto truth = vmf::VmfMixture::single(UnitVector::axis(2, 0), 5.0);
  auto smp = vmf::sample(truth, 64, rng);
  SelectorResult res = optimize::select_cv(smp);
  CHECK(res.method == Method::kCv);

  cv::GramCache cache(smp);
  SelectorResult direct = optimize::minimize_1d(
      [&](double h) { return cv::cv_loss(cache, h); }, optimize::default_cv_grid());
  CHECK(res.h == direct.h);
  CHECK(res.criterion_value == direct.criterion_value);
  CHECK(res.grid_winner == direct.grid_winner);
}

TEST_CASE("cross validation handles duplicates and tiny samples") {
  sphere::SphericalSample dup(2, 6);
  auto rng = util::make_rng(31, {2});
  auto base = sphere::sample_uniform(2, 3, rng);
  for (std::size_t i = 0; i < 6; ++i) dup.set(i, base.unit(i % 3));
  SelectorResult res = optimize::select_cv(dup);
  CHECK(std::isfinite(res.h));
  CHECK(res.h > 0.0);

  auto pair = sphere::sample_uniform(2, 2, rng);
  SelectorResult two = optimize::select_cv(pair);
  CHECK(std::isfinite(two.h));
  CHECK(two.h > 0.0);
}

TEST_CASE("cross validation concentrates near the oracle bandwidth") {
  auto truth = vmf::VmfMixture::single(UnitVector::axis(2, 0), 5.0);
  const std::size_t n = 2048;
  auto rng_oracle = util::make_rng(77, {4, n});
  double h_mise = optimize::select_mise_oracle(truth, n, rng_oracle, 20000).h;

  int within = 0;
  for (int s = 0; s < 25; ++s) {
    auto rng = util::make_rng(500 + s, {9, n});
    auto smp = vmf::sample(truth, n, rng);
    SelectorResult res = optimize::select_cv(smp);
    if (std::fabs(res.h / h_mise - 1.0) <= 0.15) ++within;
  }
  CHECK(within >= 21);
}

TEST_CASE("plug-in asymptotic selection reproduces the closed form") {
  auto theta = vmf::VmfMixture::single(UnitVector::axis(2, 0), 5.0);
  SelectorResult known = optimize::ami_for_mixture(theta, 4096);
  double expected = risk::h_amise(2, 4096, vmf::curvature_functional(theta));
  CHECK(known.h == expected);
  CHECK(known.method == Method::kAmi);
  CHECK(known.converged);
  CHECK(known.refine_iterations == 0);
  CHECK_FALSE(known.boundary_flag);
  CHECK(known.criterion_value == doctest::Approx(risk::amise(2, 4096, vmf::curvature_functional(theta), known.h)));

  auto rng = util::make_rng(31, {3});
  auto smp = vmf::sample(theta, 4096, rng);
  SelectorResult fitted = optimize::select_ami(smp);
  CHECK(std::fabs(fitted.h / expected - 1.0) < 0.1);
}

TEST_CASE("plug-in asymptotic selection degenerates at zero curvature") {
  auto uniform = vmf::VmfMixture::single(UnitVector::axis(3, 0), 0.0);
  SelectorResult res = optimize::ami_for_mixture(uniform, 100);
  CHECK(res.h == kInf);
  CHECK(res.boundary_flag);
  CHECK(res.criterion_value == 0.0);
}

TEST_CASE("exact risk plug-in with the true mixture equals the oracle") {
  auto truth = vmf::VmfMixture::single(UnitVector::axis(2, 0), 5.0);
  auto rng_a = util::make_rng(31, {4});
  auto rng_b = util::make_rng(31, {4});
  SelectorResult emi = optimize::emi_for_mixture(truth, 512, rng_a, 5000);
  SelectorResult oracle = optimize::select_mise_oracle(truth, 512, rng_b, 5000);
  CHECK(emi.h == oracle.h);
  CHECK(emi.criterion_value == oracle.criterion_value);
  CHECK(emi.grid_winner == oracle.grid_winner);
  CHECK(emi.method == Method::kEmi);
  CHECK(oracle.method == Method::kMiseOracle);
}

TEST_CASE("exact risk plug-in tracks the oracle across fitted samples") {
  auto truth = vmf::VmfMixture::single(UnitVector::axis(3, 0), 5.0);
  auto rng_oracle = util::make_rng(77, {5});
  double h_mise = optimize::select_mise_oracle(truth, 1024, rng_oracle, 20000).h;

  std::vector<double> rels;
  for (int s = 0; s < 100; ++s) {
    auto rng = util::make_rng(900 + s, {11});
    auto smp = vmf::sample(truth, 1024, rng);
    SelectorResult res = optimize::select_emi(smp, rng, 1, 20000);
    CHECK(res.method == Method::kEmi);
    rels.push_back(std::fabs(res.h / h_mise - 1.0));
  }
  std::nth_element(rels.begin(), rels.begin() + 50, rels.end());
  CHECK(rels[50] < 0.1);
}

TEST_CASE("oracle bandwidth approaches the asymptotic one at moderate sizes") {
  auto truth = vmf::VmfMixture::single(UnitVector::axis(2, 0), 5.0);
  auto rng = util::make_rng(77, {1});
  SelectorResult mo = optimize::select_mise_oracle(truth, 1024, rng, 20000);
  double h_ami = optimize::ami_for_mixture(truth, 1024).h;
  CHECK(std::fabs(mo.h / h_ami - 1.0) < 0.1);
  CHECK(mo.converged);
  CHECK_FALSE(mo.boundary_flag);
}

TEST_CASE("uniform truth drives the risk oracles to infinite bandwidth") {
  auto uniform = vmf::VmfMixture::single(UnitVector::axis(2, 0), 0.0);
  auto rng = util::make_rng(31, {5});
  SelectorResult mo = optimize::select_mise_oracle(uniform, 256, rng, 2000);
  CHECK(mo.h == kInf);
  CHECK(mo.boundary_flag);
  CHECK(mo.criterion_value == doctest::Approx(0.0).epsilon(1e-12));

  auto smp = vmf::sample(uniform, 64, rng);
  SelectorResult iso = optimize::select_ise_oracle(smp, uniform, rng, 2000);
  CHECK(iso.h == kInf);
  CHECK(iso.boundary_flag);
}

TEST_CASE("sparse multimodal circle data lands in the degenerate regime") {
  auto mv = crossed_circle_mixture(5.0);
  auto rng = util::make_rng(77, {6});
  SelectorResult mo = optimize::select_mise_oracle(mv, 32, rng, 20000);
  CHECK(mo.boundary_flag);
  // At n = 32 every finite bandwidth loses to the flat estimate outright.
  CHECK(mo.h == kInf);
  CHECK(mo.criterion_value == risk::mise_at_infinity(mv));

  // More data buys an interior optimum that tightens with n.
  auto rng_128 = util::make_rng(77, {6});
  SelectorResult mo_128 = optimize::select_mise_oracle(mv, 128, rng_128, 20000);
  CHECK_FALSE(mo_128.boundary_flag);
  CHECK(mo_128.h == doctest::Approx(0.286284).epsilon(1e-4));
  auto rng_2048 = util::make_rng(77, {6});
  SelectorResult mo_2048 = optimize::select_mise_oracle(mv, 2048, rng_2048, 20000);
  CHECK_FALSE(mo_2048.boundary_flag);
  CHECK(mo_2048.h == doctest::Approx(0.142967).epsilon(1e-4));

  auto rng_s = util::make_rng(1200, {13});
  auto smp = vmf::sample(mv, 32, rng_s);
  SelectorResult iso = optimize::select_ise_oracle(smp, mv, rng_s, 20000);
  CHECK(iso.h == kInf);
  CHECK(iso.boundary_flag);
  CHECK(iso.criterion_value == doctest::Approx(vmf::roughness(mv) - 1.0 / specfun::surface_area(1)));
}

TEST_CASE("importance sampled ise path returns a usable bandwidth") {
  auto truth = vmf::VmfMixture::single(UnitVector::axis(2, 0), 5.0);
  auto rng = util::make_rng(31, {6});
  auto smp = vmf::sample(truth, 2200, rng);
  SelectorResult res = optimize::select_ise_oracle(smp, truth, rng, 500);
  CHECK(res.method == Method::kIseOracle);
  CHECK(std::isfinite(res.h));
  CHECK(res.h > 0.0);
  CHECK(res.criterion_value > 0.0);
}

TEST_CASE("dimension mismatches are rejected") {
  auto truth3 = vmf::VmfMixture::single(UnitVector::axis(3, 0), 5.0);
  auto rng = util::make_rng(31, {7});
  auto smp2 = sphere::sample_uniform(2, 16, rng);
  CHECK_THROWS_AS(optimize::select_ise_oracle(smp2, truth3, rng), std::invalid_argument);
}
