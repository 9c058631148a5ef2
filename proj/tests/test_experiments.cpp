#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphkde/experiments.hpp"
#include "sphkde/stats.hpp"

using namespace sphkde;
using experiments::ExperimentConfig;
using optimize::Method;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool starts_with(const std::string& text, const std::string& prefix) {
  return text.compare(0, prefix.size(), prefix) == 0;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("presets build the documented truths") {
  auto single = experiments::preset("vmf", 4);
  CHECK(single.dim() == 4);
  CHECK(single.size() == 1);
  CHECK(single.component(0).kappa == 5.0);
  CHECK(single.component(0).mu.coords()[0] == 1.0);

  auto crossed = experiments::preset("mvmf", 2);
  CHECK(crossed.dim() == 2);
  CHECK(crossed.size() == 4);
  // Equal weights, means on two orthogonal axes: the first moment vanishes
  // and pairwise mean dot products are only -1 (antipodes) or 0.
  std::vector<double> moment(3, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(crossed.weight(i) == 0.25);
    CHECK(crossed.component(i).kappa == 5.0);
    const auto& mu = crossed.component(i).mu.coords();
    for (std::size_t k = 0; k < 3; ++k) moment[k] += 0.25 * mu[k];
  }
  for (double v : moment) CHECK(v == 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      double dot = 0.0;
      const auto& a = crossed.component(i).mu.coords();
      const auto& b = crossed.component(j).mu.coords();
      for (std::size_t k = 0; k < 3; ++k) dot += a[k] * b[k];
      CHECK((dot == -1.0 || dot == 0.0));
    }
  }

  CHECK_THROWS_AS(experiments::preset("gauss", 2), std::invalid_argument);
  CHECK_THROWS_AS(experiments::preset("vmf", 0), std::invalid_argument);
  CHECK_THROWS_AS(experiments::preset("vmf", 11), std::invalid_argument);

  for (Method m : {Method::kCv, Method::kAmi, Method::kEmi, Method::kMiseOracle,
                   Method::kIseOracle}) {
    CHECK(experiments::method_from_name(experiments::method_name(m)) == m);
  }
  CHECK_THROWS_AS(experiments::method_from_name("lscv"), std::invalid_argument);
}

TEST_CASE("json configs parse, default, and reject junk") {
  auto cfg = experiments::config_from_json_text(
      R"({"truth":"mvmf","dims":[1,2],"log2_n":[5,6.5],"M":7,)"
      R"("selectors":["cv","emi"],"B":711,"seed":9,"n_min_fit":3,"trim":0.1})");
  CHECK(cfg.preset == "mvmf");
  CHECK_FALSE(cfg.custom_truth.has_value());
  CHECK(cfg.dims == std::vector<int>{1, 2});
  CHECK(cfg.log2_n == std::vector<double>{5.0, 6.5});
  CHECK(cfg.replicates == 7);
  CHECK(cfg.selectors == std::vector<Method>{Method::kCv, Method::kEmi});
  CHECK(cfg.is_draws == 711);
  CHECK(cfg.seed == 9);
  CHECK(cfg.n_min_fit == 3);
  CHECK(cfg.trim == 0.1);

  // Missing keys keep their defaults.
  auto defaults = experiments::config_from_json_text("{}");
  CHECK(defaults.preset == "vmf");
  CHECK(defaults.dims.size() == 5);
  CHECK(defaults.log2_n.size() == 9);
  CHECK(defaults.replicates == 300);
  CHECK(defaults.is_draws == 20000);

  // Inline mixture object switches to a custom truth.
  auto custom = experiments::config_from_json_text(
      R"({"truth":{"d":1,"mu":[[0,1]],"kappa":[3],"p":[1]},"dims":[1]})");
  CHECK(custom.preset == "custom");
  REQUIRE(custom.custom_truth.has_value());
  CHECK(custom.custom_truth->dim() == 1);
  CHECK(custom.custom_truth->component(0).kappa == 3.0);

  CHECK_THROWS_AS(experiments::config_from_json_text(R"({"bandwidths":[1]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(experiments::config_from_json_text(R"({"M":"many"})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(experiments::config_from_json_text("[1,2]"), std::invalid_argument);
  CHECK_THROWS_AS(experiments::config_from_json_text("{"), std::invalid_argument);

  // Structural problems surface when a study starts, not at parse time.
  ExperimentConfig bad;
  bad.replicates = 0;
  CHECK_THROWS_AS(experiments::run_rate_experiment(bad), std::invalid_argument);
  bad = ExperimentConfig{};
  bad.selectors = {Method::kCv, Method::kCv};
  CHECK_THROWS_AS(experiments::run_rate_experiment(bad), std::invalid_argument);
  bad = ExperimentConfig{};
  bad.trim = 1.0;
  CHECK_THROWS_AS(experiments::run_rate_experiment(bad), std::invalid_argument);
  bad = ExperimentConfig{};
  bad.dims = {};
  CHECK_THROWS_AS(experiments::run_rate_experiment(bad), std::invalid_argument);
  bad = ExperimentConfig{};
  bad.dims = {11};
  CHECK_THROWS_AS(experiments::run_rate_experiment(bad), std::invalid_argument);
  bad = experiments::config_from_json_text(
      R"({"truth":{"d":1,"mu":[[0,1]],"kappa":[3],"p":[1]},"dims":[1,2]})");
  CHECK_THROWS_AS(experiments::run_rate_experiment(bad), std::invalid_argument);
}

TEST_CASE("single-replicate run emits the documented csv schema") {
  ExperimentConfig cfg;
  cfg.preset = "vmf";
  cfg.dims = {1};
  cfg.log2_n = {5.0, 6.0};
  cfg.replicates = 1;
  cfg.selectors = {Method::kCv, Method::kAmi};
  cfg.is_draws = 500;
  cfg.n_min_fit = 1;
  auto study = experiments::run_rate_experiment(cfg);

  REQUIRE(study.cells.size() == 2);
  CHECK(study.cells[0].n == 32);
  CHECK(study.cells[1].n == 64);
  for (const auto& cell : study.cells) {
    CHECK_FALSE(cell.skipped);
    for (std::size_t s = 0; s < 2; ++s) {
      REQUIRE(cell.relative_errors[s].size() == 1);
      // With one replicate every summary collapses onto that value.
      CHECK(cell.summaries[s].mean == cell.relative_errors[s][0]);
      CHECK(cell.summaries[s].median == cell.relative_errors[s][0]);
      CHECK(std::isnan(cell.lilliefors_p[s]));  // needs M >= 4
    }
  }

  auto cell_lines = lines_of(experiments::cells_csv(study));
  REQUIRE(cell_lines.size() == 5);
  CHECK(cell_lines[0] == "d,n,selector,mean,rmse,median,lilliefors_p,skipped");
  CHECK(starts_with(cell_lines[1], "1,32,cv,"));
  CHECK(starts_with(cell_lines[2], "1,32,ami,"));
  CHECK(starts_with(cell_lines[3], "1,64,cv,"));
  CHECK(starts_with(cell_lines[4], "1,64,ami,"));

  auto fit_lines = lines_of(experiments::fits_csv(study));
  REQUIRE(fit_lines.size() == 3);
  CHECK(fit_lines[0] == "d,selector,beta_hat,beta_star,delta_pct,r2,p_onesided");
  REQUIRE(study.fits.size() == 2);
  CHECK(study.fits[0].method == Method::kCv);
  CHECK(study.fits[0].beta_star == doctest::Approx(-0.1));  // -d/(2d+8) at d=1
  CHECK(study.fits[1].beta_star == doctest::Approx(-0.4));
  for (const auto& f : study.fits) {
    CHECK(f.fit.n_points == 2);
    CHECK(f.fit.r_squared == doctest::Approx(1.0));  // two points fit exactly
    CHECK(std::isnan(f.fit.p_value_onesided));       // no residual df
  }
}

TEST_CASE("mise oracle rows are exactly zero and their fit degenerates") {
  ExperimentConfig cfg;
  cfg.preset = "vmf";
  cfg.dims = {1};
  cfg.log2_n = {6.0, 7.0};
  cfg.replicates = 4;
  cfg.selectors = {Method::kMiseOracle};
  cfg.is_draws = 500;
  cfg.n_min_fit = 1;
  auto study = experiments::run_rate_experiment(cfg);

  for (const auto& cell : study.cells) {
    REQUIRE_FALSE(cell.skipped);
    for (double e : cell.relative_errors[0]) CHECK(e == 0.0);
    CHECK(cell.summaries[0].mean == 0.0);
    CHECK(cell.summaries[0].rmse == 0.0);
    CHECK(cell.boundary_fraction[0] == 0.0);
    CHECK_FALSE(cell.unstable[0]);
  }
  // rmse = 0 cells cannot enter a log-log fit.
  REQUIRE(study.fits.size() == 1);
  CHECK(study.fits[0].beta_star == doctest::Approx(-0.1));
  CHECK(std::isnan(study.fits[0].fit.slope));
  CHECK(study.fits[0].fit.n_points == 0);
}

TEST_CASE("infinite oracle bandwidth skips the cell and the fit drops it") {
  // Four crossed modes on the circle: at n = 32 no finite bandwidth beats
  // the flat estimate, at n = 128 an interior optimum exists but replicate
  // selections often degenerate.
  ExperimentConfig cfg;
  cfg.preset = "mvmf";
  cfg.dims = {1};
  cfg.log2_n = {5.0, 7.0};
  cfg.replicates = 10;
  cfg.selectors = {Method::kCv, Method::kIseOracle};
  cfg.is_draws = 2000;
  cfg.seed = 0;
  cfg.n_min_fit = 1;
  auto study = experiments::run_rate_experiment(cfg);

  REQUIRE(study.cells.size() == 2);
  const auto& skipped = study.cells[0];
  CHECK(skipped.n == 32);
  CHECK(skipped.skipped);
  CHECK(skipped.skip_reason == "h_mise_infinite");
  CHECK(skipped.h_mise == kInf);
  CHECK(skipped.h_mise_boundary);
  CHECK(skipped.relative_errors[0].empty());
  CHECK(std::isnan(skipped.lilliefors_p[0]));

  const auto& live = study.cells[1];
  CHECK(live.n == 128);
  CHECK(live.h_mise == doctest::Approx(0.286284).epsilon(1e-4));
  CHECK_FALSE(live.skipped);
  // The ise_oracle column picks h = +inf on some replicates, so its rmse is
  // infinite and the slope fit is left with no usable cell; cv keeps one.
  CHECK(std::isfinite(live.summaries[0].rmse));
  CHECK(live.summaries[1].rmse == kInf);
  CHECK(study.fits[0].fit.n_points == 1);
  CHECK(std::isnan(study.fits[0].fit.slope));
  CHECK(study.fits[1].fit.n_points == 0);

  auto csv = experiments::cells_csv(study);
  CHECK(csv.find("1,32,cv,nan,nan,nan,nan,h_mise_infinite") != std::string::npos);
  CHECK(csv.find("1,32,ise_oracle,nan,nan,nan,nan,h_mise_infinite") != std::string::npos);
}

TEST_CASE("high boundary fractions annotate the cell as unstable") {
  ExperimentConfig cfg;
  cfg.preset = "mvmf";
  cfg.dims = {1};
  cfg.log2_n = {7.0};
  cfg.replicates = 10;
  cfg.selectors = {Method::kCv, Method::kIseOracle};
  cfg.is_draws = 2000;
  cfg.seed = 0;
  cfg.n_min_fit = 1;
  auto study = experiments::run_rate_experiment(cfg);

  const auto& cell = study.cells[0];
  CHECK(cell.boundary_fraction[0] == doctest::Approx(0.1));
  CHECK_FALSE(cell.unstable[0]);
  CHECK(cell.boundary_fraction[1] == doctest::Approx(0.3));
  CHECK(cell.unstable[1]);

  auto lines = lines_of(experiments::cells_csv(study));
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].back() == ',');  // cv row carries no note
  CHECK(lines[2].find("ise_oracle") != std::string::npos);
  CHECK(lines[2].substr(lines[2].size() - 8) == "unstable");
}

TEST_CASE("cross-validation recovers its convergence rate on the sphere") {
  ExperimentConfig cfg;
  cfg.preset = "vmf";
  cfg.dims = {2};
  cfg.log2_n = {7.0, 8.0, 9.0, 10.0, 11.0};
  cfg.replicates = 25;
  cfg.selectors = {Method::kCv};
  cfg.is_draws = 2000;
  cfg.seed = 2;
  auto study = experiments::run_rate_experiment(cfg);

  // The oracle bandwidths are deterministic quadrature minimizers; the
  // largest cell agrees with an independent high-precision minimization
  // (h* = 0.131020229753 at n = 2048).
  const double h_ref[5] = {0.216638, 0.190253, 0.167697, 0.148149, 0.131020};
  REQUIRE(study.cells.size() == 5);
  for (int k = 0; k < 5; ++k) {
    CHECK(study.cells[k].h_mise == doctest::Approx(h_ref[k]).epsilon(1e-3));
    CHECK_FALSE(study.cells[k].skipped);
    CHECK(study.cells[k].boundary_fraction[0] == 0.0);
  }

  REQUIRE(study.fits.size() == 1);
  const auto& f = study.fits[0];
  CHECK(f.beta_star == doctest::Approx(-2.0 / 12.0));
  CHECK(f.fit.n_points == 5);
  CHECK(f.fit.slope == doctest::Approx(-0.2445).epsilon(0.02));
  CHECK(f.fit.r_squared > 0.95);
  // Faster than the guaranteed exponent, as the slope test should report.
  CHECK(f.fit.p_value_onesided < 0.05);
}

TEST_CASE("density error study ranks parametric, oracle, and selectors") {
  ExperimentConfig cfg;
  cfg.preset = "vmf";
  cfg.dims = {2};
  cfg.log2_n = {6.0, 8.0, 10.0};
  cfg.replicates = 12;
  cfg.selectors = {Method::kCv, Method::kAmi};
  cfg.is_draws = 2000;
  cfg.seed = 0;
  auto study = experiments::run_density_error_experiment(cfg);

  REQUIRE(study.selectors.size() == 3);  // ise_oracle appended
  CHECK(study.selectors.back() == Method::kIseOracle);
  REQUIRE(study.cells.size() == 3);

  for (const auto& cell : study.cells) {
    // The oracle minimizes the same frozen-draw metric each selector is
    // scored with, so it lower-bounds every replicate pointwise.
    for (std::size_t s = 0; s + 1 < study.selectors.size(); ++s) {
      for (std::size_t j = 0; j < cell.l2_errors[s].size(); ++j) {
        CHECK(cell.l2_errors[s][j] >= cell.l2_errors.back()[j]);
      }
    }
    // A correctly specified parametric fit beats every kernel estimate.
    CHECK(cell.parametric_mean < cell.mean_l2.back());
  }

  // Mean errors fall with n and the cv/oracle efficiency gap closes.
  CHECK(study.cells[0].mean_l2[0] == doctest::Approx(0.1800).epsilon(0.01));
  CHECK(study.cells[2].mean_l2[0] == doctest::Approx(0.0712).epsilon(0.01));
  CHECK(study.cells[2].mean_l2.back() == doctest::Approx(0.0674).epsilon(0.01));
  CHECK(study.cells[0].mean_l2[0] / study.cells[0].mean_l2.back() >
        study.cells[2].mean_l2[0] / study.cells[2].mean_l2.back());
  CHECK(study.cells[2].mean_l2[0] / study.cells[2].mean_l2.back() < 1.15);

  // Parametric error decays at the root-n rate.
  std::vector<std::pair<double, double>> pts;
  for (const auto& cell : study.cells)
    pts.push_back({static_cast<double>(cell.n), cell.parametric_mean});
  auto fit = stats::loglog_fit(pts, 0.0, -0.5);
  CHECK(fit.slope == doctest::Approx(-0.4475).epsilon(0.02));

  auto lines = lines_of(experiments::errors_csv(study));
  REQUIRE(lines.size() == 13);  // header + 3 cells x (3 selectors + parametric)
  CHECK(lines[0] == "d,n,selector,mean_l2_error");
  CHECK(starts_with(lines[1], "2,64,cv,"));
  CHECK(starts_with(lines[4], "2,64,parametric,"));
  CHECK(starts_with(lines[12], "2,1024,parametric,"));
}

TEST_CASE("importance-sampled path keeps the high-dimensional study sane") {
  ExperimentConfig cfg;
  cfg.preset = "vmf";
  cfg.dims = {5};
  cfg.log2_n = {10.0};
  cfg.replicates = 8;
  cfg.selectors = {Method::kCv};
  cfg.is_draws = 2000;
  cfg.seed = 1;
  auto study = experiments::run_density_error_experiment(cfg);

  const auto& cell = study.cells[0];
  const double ratio = cell.mean_l2[0] / cell.mean_l2.back();
  CHECK(ratio >= 1.0);
  CHECK(ratio < 1.05);  // cv sits within a few percent of the frozen-draw oracle
  CHECK(cell.parametric_mean < cell.mean_l2.back());
}

TEST_CASE("studies are bit-identical across thread counts") {
  ExperimentConfig cfg;
  cfg.preset = "vmf";
  cfg.dims = {1};
  cfg.log2_n = {6.0, 7.0};
  cfg.replicates = 6;
  cfg.selectors = {Method::kCv, Method::kEmi};
  cfg.is_draws = 500;
  cfg.n_min_fit = 1;
  cfg.seed = 4;
  auto serial = experiments::run_rate_experiment(cfg);
  cfg.n_threads = 3;
  auto threaded = experiments::run_rate_experiment(cfg);
  CHECK(experiments::cells_csv(serial) == experiments::cells_csv(threaded));
  CHECK(experiments::fits_csv(serial) == experiments::fits_csv(threaded));

  ExperimentConfig ecfg;
  ecfg.preset = "vmf";
  ecfg.dims = {1};
  ecfg.log2_n = {6.0};
  ecfg.replicates = 4;
  ecfg.selectors = {Method::kCv};
  ecfg.is_draws = 400;
  ecfg.seed = 9;
  auto eserial = experiments::run_density_error_experiment(ecfg);
  ecfg.n_threads = 3;
  auto ethreaded = experiments::run_density_error_experiment(ecfg);
  CHECK(experiments::errors_csv(eserial) == experiments::errors_csv(ethreaded));
}
