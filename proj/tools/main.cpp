// Command-line front end for the spherical KDE library. Eight subcommands
// cover single-model evaluation (density, fit-bandwidth, cv-curve), risk
// curves and oracle comparisons against a known truth (mise-curve,
// ise-compare), the dimension sweep of the asymptotic constants
// (asymptotics), and the Monte Carlo studies driven by JSON configs (rates,
// errors). Numeric output is CSV or JSON on stdout or --output; progress
// notes go to stderr. Exit codes: 0 success, 1 usage error, 2 data or
// validation error.

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sphkde/asymptotics.hpp"
#include "sphkde/cv.hpp"
#include "sphkde/experiments.hpp"
#include "sphkde/kde.hpp"
#include "sphkde/optimize.hpp"
#include "sphkde/risk.hpp"
#include "sphkde/sphere.hpp"
#include "sphkde/util.hpp"
#include "sphkde/vmf.hpp"

namespace {

using namespace sphkde;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Derived-seed tags keeping the subcommands' rng streams disjoint.
constexpr std::uint64_t kTagDensityGrid = 201;
constexpr std::uint64_t kTagFit = 202;
constexpr std::uint64_t kTagMiseCurve = 203;
constexpr std::uint64_t kTagCompareSample = 204;
constexpr std::uint64_t kTagCompareScore = 205;

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_output(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << text;
}

//! --truth accepts a preset name ("vmf", "mvmf") instantiated at --d, or a
//! path to a mixture JSON file (which fixes the dimension itself).
vmf::VmfMixture resolve_truth(const std::string& truth, int d) {
  if (truth == "vmf" || truth == "mvmf") return experiments::preset(truth, d);
  return vmf::load_mixture_json(truth);
}

std::vector<double> log_spaced(double lo, double hi, int num) {
  if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("need 0 < hmin <= hmax");
  if (num < 1) throw std::invalid_argument("need at least one grid point");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(num));
  for (int k = 0; k < num; ++k) {
    const double t = num == 1 ? 0.0 : static_cast<double>(k) / (num - 1);
    out.push_back(lo * std::pow(hi / lo, t));
  }
  return out;
}

//! Doubles that JSON cannot hold become the strings "infinity" / "-infinity"
//! / "nan" so recipes can still parse the field.
nlohmann::json encode_double(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "infinity" : "-infinity";
}

void run_density(const std::string& data, double h, int grid, std::uint64_t seed,
                 const std::string& output) {
  auto sample = sphere::load_sample_csv(data);
  kde::KdeModel model(sample, h);
  const int d = sample.dim();

  std::ostringstream os;
  for (int k = 0; k <= d; ++k) os << 'x' << k << ',';
  os << "density\n";

  sphere::SphericalSample points(d, static_cast<std::size_t>(grid));
  if (d == 1) {
    // Equally spaced circle angles: deterministic without any seed.
    for (int k = 0; k < grid; ++k) {
      const double a = 2.0 * std::numbers::pi * k / grid;
      points.set(static_cast<std::size_t>(k),
                 sphere::UnitVector(std::vector<double>{std::cos(a), std::sin(a)}));
    }
  } else {
    auto rng = util::make_rng(seed, {kTagDensityGrid});
    points = sphere::sample_uniform(d, static_cast<std::size_t>(grid), rng);
  }
  const auto values = model.evaluate_batch(points);
  for (int k = 0; k < grid; ++k) {
    const auto p = points.point(static_cast<std::size_t>(k));
    for (double c : p) os << fmt_num(c) << ',';
    os << fmt_num(values[static_cast<std::size_t>(k)]) << '\n';
  }
  write_output(os.str(), output);
}

void run_fit_bandwidth(const std::string& data, const std::string& method, std::size_t components,
                       std::size_t is_draws, std::uint64_t seed, unsigned threads,
                       const std::string& output) {
  auto sample = sphere::load_sample_csv(data);
  auto rng = util::make_rng(seed, {kTagFit});
  optimize::SelectorResult res;
  if (method == "cv") {
    res = optimize::select_cv(sample, threads);
  } else if (method == "ami") {
    res = optimize::select_ami(sample, components, rng);
  } else if (method == "emi") {
    res = optimize::select_emi(sample, rng, components, is_draws);
  } else {
    throw std::invalid_argument("fit-bandwidth method must be cv, ami, or emi");
  }

  nlohmann::json j;
  j["method"] = method;
  j["h"] = encode_double(res.h);
  j["criterion"] = encode_double(res.criterion_value);
  j["grid_winner"] = encode_double(res.grid_winner);
  j["refine_iterations"] = res.refine_iterations;
  j["converged"] = res.converged;
  j["boundary_flag"] = res.boundary_flag;
  j["n"] = sample.size();
  j["d"] = sample.dim();
  j["seed"] = seed;
  write_output(j.dump(2) + "\n", output);
}

void run_cv_curve(const std::string& data, double hmin, double hmax, int num, unsigned threads,
                  const std::string& output) {
  auto sample = sphere::load_sample_csv(data);
  cv::GramCache cache(sample);
  std::ostringstream os;
  os << "h,cv_loss\n";
  for (double h : log_spaced(hmin, hmax, num)) {
    os << fmt_num(h) << ',' << fmt_num(cv::cv_loss(cache, h, threads)) << '\n';
  }
  write_output(os.str(), output);
}

void run_mise_curve(const std::string& truth_arg, int d, std::size_t n, double hmin, double hmax,
                    int num, std::size_t is_draws, std::uint64_t seed, const std::string& output) {
  auto truth = resolve_truth(truth_arg, d);
  auto rng = util::make_rng(seed, {kTagMiseCurve});
  risk::RiskEvaluator ev(truth, n, is_draws, rng);
  std::ostringstream os;
  os << "h,mise\n";
  for (double h : log_spaced(hmin, hmax, num)) {
    os << fmt_num(h) << ',' << fmt_num(ev.exact_mise(h)) << '\n';
  }
  os << "inf," << fmt_num(ev.mise_at_infinity()) << '\n';
  write_output(os.str(), output);
}

void run_ise_compare(const std::string& truth_arg, int d, std::size_t n, std::size_t components,
                     std::size_t is_draws, std::uint64_t seed, const std::string& output) {
  auto truth = resolve_truth(truth_arg, d);
  auto sample_rng = util::make_rng(seed, {kTagCompareSample});
  auto sample = vmf::sample(truth, n, sample_rng);
  const std::size_t r = components > 0 ? components : truth.size();

  // One model per selector, all scored with the same metric: exact ISE when
  // the O(n^2) path is allowed, otherwise importance sampling re-seeded to
  // the identical draw set for every selector.
  auto score = [&](double h) {
    if (h == kInf) return risk::mise_at_infinity(truth);
    kde::KdeModel model(sample, h);
    if (n <= risk::kExactIseMaxN) return risk::exact_ise(model, truth);
    auto score_rng = util::make_rng(seed, {kTagCompareScore});
    return risk::is_ise(model, truth, is_draws, score_rng);
  };

  std::ostringstream os;
  os << "selector,h,ise\n";
  const optimize::Method methods[] = {optimize::Method::kCv, optimize::Method::kAmi,
                                      optimize::Method::kEmi, optimize::Method::kMiseOracle,
                                      optimize::Method::kIseOracle};
  for (std::size_t s = 0; s < 5; ++s) {
    auto rng = util::make_rng(seed, {kTagCompareSample, 1 + s});
    optimize::SelectorResult res;
    switch (methods[s]) {
      case optimize::Method::kCv:
        res = optimize::select_cv(sample);
        break;
      case optimize::Method::kAmi:
        res = optimize::select_ami(sample, r, rng);
        break;
      case optimize::Method::kEmi:
        res = optimize::select_emi(sample, rng, r, is_draws);
        break;
      case optimize::Method::kMiseOracle:
        res = optimize::select_mise_oracle(truth, n, rng, is_draws);
        break;
      case optimize::Method::kIseOracle:
        res = optimize::select_ise_oracle(sample, truth, rng, is_draws);
        break;
    }
    os << experiments::method_name(methods[s]) << ',' << fmt_num(res.h) << ','
       << fmt_num(score(res.h)) << '\n';
  }
  write_output(os.str(), output);
}

void run_asymptotics(double kappa, int dmax, const std::string& output) {
  if (dmax < 1) throw std::invalid_argument("dmax must be >= 1");
  std::ostringstream os;
  os << "d,tau,rho,sigma2,sigma0_sq,beta_cv,beta_ami,beta_emi\n";
  for (int d = 1; d <= dmax; ++d) {
    const auto vc = asymptotics::sigma_sq(d, kappa);
    const auto rates = asymptotics::rate_exponents(d);
    os << d << ',' << fmt_num(vc.tau) << ',' << fmt_num(vc.rho) << ',' << fmt_num(vc.sigma2)
       << ',' << fmt_num(asymptotics::sigma0_sq_vmf(d)) << ',' << fmt_num(rates.beta_cv) << ','
       << fmt_num(rates.beta_ami) << ',' << fmt_num(rates.beta_emi) << '\n';
  }
  write_output(os.str(), output);
}

experiments::ExperimentConfig load_study_config(const std::string& path, bool seed_given,
                                                std::uint64_t seed, unsigned threads) {
  auto cfg = experiments::load_config(path);
  if (seed_given) cfg.seed = seed;  // explicit --seed wins over the config
  cfg.n_threads = threads;
  return cfg;
}

void run_rates(const experiments::ExperimentConfig& cfg, const std::string& cells_path,
               const std::string& fits_path, const std::string& output) {
  std::cerr << "rate study: " << cfg.dims.size() << " dim(s) x " << cfg.log2_n.size()
            << " size(s) x " << cfg.replicates << " replicate(s)\n";
  auto study = experiments::run_rate_experiment(cfg);
  std::string combined;
  if (cells_path.empty())
    combined += experiments::cells_csv(study);
  else
    write_output(experiments::cells_csv(study), cells_path);
  if (fits_path.empty())
    combined += experiments::fits_csv(study);
  else
    write_output(experiments::fits_csv(study), fits_path);
  if (!combined.empty()) write_output(combined, output);
  std::cerr << "rate study done\n";
}

void run_errors(const experiments::ExperimentConfig& cfg, const std::string& output) {
  std::cerr << "density error study: " << cfg.dims.size() << " dim(s) x " << cfg.log2_n.size()
            << " size(s) x " << cfg.replicates << " replicate(s)\n";
  auto study = experiments::run_density_error_experiment(cfg);
  write_output(experiments::errors_csv(study), output);
  std::cerr << "density error study done\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel density estimation on the sphere with von Mises-Fisher kernels"};
  app.require_subcommand(1);
  // The density subcommand spells its bandwidth --h, so help must not claim -h.
  app.set_help_flag("--help", "Print this help message and exit");

  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string output;
  auto* seed_opt =
      app.add_option("--seed", seed, "Base seed for every random stream (default 0)");
  app.add_option("--threads", threads, "Worker thread count (default 1, never auto-detected)");
  app.add_option("--output", output, "Write numeric output to this file instead of stdout");

  std::string data, method = "cv", truth = "vmf", config, cells_path, fits_path;
  double h = 0.5, hmin = 0.05, hmax = 2.0, kappa = 10.0;
  int grid = 100, num = 50, d = 2, dmax = 60;
  std::size_t n = 0, components = 1, cmp_components = 0, is_draws = 20000;

  auto* c_density = app.add_subcommand("density", "Evaluate a fitted density on a point grid");
  c_density->add_option("--data", data, "Sample CSV, one unit vector per row")->required();
  c_density->add_option("--h", h, "Bandwidth")->required();
  c_density->add_option("--grid", grid, "Number of evaluation points (default 100)")
      ->check(CLI::PositiveNumber);

  auto* c_fit = app.add_subcommand("fit-bandwidth", "Select a bandwidth from data");
  c_fit->add_option("--data", data, "Sample CSV, one unit vector per row")->required();
  c_fit->add_option("--method", method, "Selector: cv, ami, or emi (default cv)");
  c_fit->add_option("--components", components, "Pilot mixture order for ami/emi (default 1)");
  c_fit->add_option("--b", is_draws, "Importance-sample size for emi (default 20000)");

  auto* c_cv = app.add_subcommand("cv-curve", "Cross-validation loss over a bandwidth grid");
  c_cv->add_option("--data", data, "Sample CSV, one unit vector per row")->required();
  c_cv->add_option("--hmin", hmin, "Smallest bandwidth (default 0.05)");
  c_cv->add_option("--hmax", hmax, "Largest bandwidth (default 2)");
  c_cv->add_option("--num", num, "Grid size, log-spaced (default 50)");

  auto* c_mise = app.add_subcommand("mise-curve", "Exact MISE curve for a known truth");
  c_mise->add_option("--truth", truth, "Preset name (vmf, mvmf) or mixture JSON path");
  c_mise->add_option("--d", d, "Sphere dimension for presets (default 2)");
  c_mise->add_option("--n", n, "Sample size the MISE refers to")->required();
  c_mise->add_option("--hmin", hmin, "Smallest bandwidth (default 0.05)");
  c_mise->add_option("--hmax", hmax, "Largest bandwidth (default 2)");
  c_mise->add_option("--num", num, "Grid size, log-spaced (default 50)");
  c_mise->add_option("--b", is_draws, "Importance-sample size for d >= 3 (default 20000)");

  auto* c_cmp = app.add_subcommand("ise-compare",
                                   "Draw one sample and score every selector by the same ISE");
  c_cmp->add_option("--truth", truth, "Preset name (vmf, mvmf) or mixture JSON path");
  c_cmp->add_option("--d", d, "Sphere dimension for presets (default 2)");
  c_cmp->add_option("--n", n, "Sample size")->required();
  c_cmp->add_option("--components", cmp_components,
                    "Pilot mixture order (default 0: the truth's order)");
  c_cmp->add_option("--b", is_draws, "Importance-sample size (default 20000)");

  auto* c_asy = app.add_subcommand("asymptotics",
                                   "Asymptotic variance constants and rate exponents by dimension");
  c_asy->add_option("--kappa", kappa, "Truth concentration for sigma2 (default 10)");
  c_asy->add_option("--dmax", dmax, "Largest dimension (default 60)");

  auto* c_rates = app.add_subcommand("rates", "Bandwidth-selector rate study from a JSON config");
  c_rates->add_option("--config", config, "Experiment config JSON path")->required();
  c_rates->add_option("--cells", cells_path, "Write per-cell CSV here (default: with --output)");
  c_rates->add_option("--fits", fits_path, "Write rate-fit CSV here (default: with --output)");

  auto* c_err = app.add_subcommand("errors", "Density L2-error study from a JSON config");
  c_err->add_option("--config", config, "Experiment config JSON path")->required();

  // Let --seed/--threads/--output appear after the subcommand name too.
  for (auto* sub : {c_density, c_fit, c_cv, c_mise, c_cmp, c_asy, c_rates, c_err}) {
    sub->fallthrough();
    sub->set_help_flag("--help", "Print this help message and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_density) {
      run_density(data, h, grid, seed, output);
    } else if (*c_fit) {
      run_fit_bandwidth(data, method, components, is_draws, seed, threads, output);
    } else if (*c_cv) {
      run_cv_curve(data, hmin, hmax, num, threads, output);
    } else if (*c_mise) {
      if (n == 0) throw std::invalid_argument("n must be >= 1");
      run_mise_curve(truth, d, n, hmin, hmax, num, is_draws, seed, output);
    } else if (*c_cmp) {
      if (n == 0) throw std::invalid_argument("n must be >= 1");
      run_ise_compare(truth, d, n, cmp_components, is_draws, seed, output);
    } else if (*c_asy) {
      run_asymptotics(kappa, dmax, output);
    } else if (*c_rates) {
      run_rates(load_study_config(config, seed_opt->count() > 0, seed, threads), cells_path,
                fits_path, output);
    } else if (*c_err) {
      run_errors(load_study_config(config, seed_opt->count() > 0, seed, threads), output);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
