#include "sphkde/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "sphkde/asymptotics.hpp"
#include "sphkde/kde.hpp"
#include "sphkde/util.hpp"

namespace sphkde::experiments {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream tags keeping every randomized stage on its own derived seed path
// (base seed, tag, d, cell, replicate).
constexpr std::uint64_t kTagOracle = 101;
constexpr std::uint64_t kTagReplicate = 102;
constexpr std::uint64_t kTagLilliefors = 103;
constexpr std::uint64_t kTagPilot = 104;
constexpr std::uint64_t kTagErrorReplicate = 105;

constexpr std::size_t kLillieforsBoot = 2000;

std::size_t sample_size_for(double ell) {
  return static_cast<std::size_t>(std::floor(std::pow(2.0, ell)));
}

vmf::VmfMixture resolve_truth(const ExperimentConfig& cfg, int d) {
  if (cfg.preset == "custom") return *cfg.custom_truth;
  return preset(cfg.preset, d);
}

void validate_config(const ExperimentConfig& cfg, bool need_selectors) {
  if (cfg.replicates < 1)
    throw std::invalid_argument("experiment config: M must be at least 1");
  if (cfg.dims.empty())
    throw std::invalid_argument("experiment config: dims must not be empty");
  if (cfg.log2_n.empty())
    throw std::invalid_argument("experiment config: log2_n must not be empty");
  for (double ell : cfg.log2_n) {
    if (!std::isfinite(ell) || sample_size_for(ell) < 2)
      throw std::invalid_argument("experiment config: each sample size must be at least 2");
  }
  if (!(cfg.trim >= 0.0 && cfg.trim < 1.0))
    throw std::invalid_argument("experiment config: trim must lie in [0, 1)");
  if (cfg.is_draws == 0)
    throw std::invalid_argument("experiment config: B must be at least 1");
  if (need_selectors && cfg.selectors.empty())
    throw std::invalid_argument("experiment config: selectors must not be empty");
  std::set<optimize::Method> seen(cfg.selectors.begin(), cfg.selectors.end());
  if (seen.size() != cfg.selectors.size())
    throw std::invalid_argument("experiment config: duplicate selector");
  if (cfg.preset == "custom") {
    if (!cfg.custom_truth)
      throw std::invalid_argument("experiment config: custom preset needs a truth mixture");
    for (int d : cfg.dims) {
      if (d != cfg.custom_truth->dim())
        throw std::invalid_argument(
            "experiment config: dims must match the custom truth dimension");
    }
  } else {
    for (int d : cfg.dims) {
      if (d < 1 || d > 10)
        throw std::invalid_argument("experiment config: preset dims must lie in [1, 10]");
    }
  }
}

//! Reference exponent for the slope test and the normality rescaling. The
//! oracle "selectors" deviate at the cross-validation rate (the ISE minimizer
//! itself fluctuates around h_MISE at that order), so they share beta_cv.
double beta_star_for(optimize::Method m, const asymptotics::RateExponents& rates) {
  switch (m) {
    case optimize::Method::kCv:
      return rates.beta_cv;
    case optimize::Method::kAmi:
      return rates.beta_ami;
    case optimize::Method::kEmi:
      return rates.beta_emi;
    case optimize::Method::kMiseOracle:
    case optimize::Method::kIseOracle:
      return rates.beta_cv;
  }
  throw std::logic_error("beta_star_for: unhandled method");
}

struct SelectorOutcome {
  double h = 0.0;
  bool flagged = false;
};

//! Runs one selector on one replicate. The shared MISE-oracle bandwidth is
//! passed in; everything else consumes the replicate rng in a fixed order.
SelectorOutcome run_selector(optimize::Method m, const sphere::SphericalSample& sample,
                             const vmf::VmfMixture& truth, std::size_t r, double h_mise,
                             bool h_mise_flag, std::mt19937_64& rng, std::size_t is_draws) {
  switch (m) {
    case optimize::Method::kCv: {
      auto res = optimize::select_cv(sample);
      return {res.h, res.boundary_flag};
    }
    case optimize::Method::kAmi: {
      auto res = optimize::select_ami(sample, r, rng);
      return {res.h, res.boundary_flag};
    }
    case optimize::Method::kEmi: {
      auto res = optimize::select_emi(sample, rng, r, is_draws);
      return {res.h, res.boundary_flag};
    }
    case optimize::Method::kMiseOracle:
      return {h_mise, h_mise_flag};
    case optimize::Method::kIseOracle: {
      auto res = optimize::select_ise_oracle(sample, truth, rng, is_draws);
      return {res.h, res.boundary_flag};
    }
  }
  throw std::logic_error("run_selector: unhandled method");
}

//! L2 distance between two mixtures from roughness algebra alone:
//! |a - b|^2 = 2 R(a) + 2 R(b) - 4 R((a + b) / 2).
double mixture_l2_distance(const vmf::VmfMixture& a, const vmf::VmfMixture& b) {
  std::vector<vmf::VmfComponent> comps;
  std::vector<double> weights;
  comps.reserve(a.size() + b.size());
  weights.reserve(a.size() + b.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    comps.push_back(a.component(j));
    weights.push_back(0.5 * a.weight(j));
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    comps.push_back(b.component(j));
    weights.push_back(0.5 * b.weight(j));
  }
  vmf::VmfMixture blend(std::move(comps), std::move(weights));
  double sq = 2.0 * vmf::roughness(a) + 2.0 * vmf::roughness(b) - 4.0 * vmf::roughness(blend);
  return std::sqrt(std::max(0.0, sq));
}

vmf::VmfMixture fit_parametric(const sphere::SphericalSample& sample, std::size_t r,
                               std::mt19937_64& rng) {
  if (r <= 1) {
    auto comp = vmf::fit_mle_single(sample);
    return vmf::VmfMixture::single(comp.mu, comp.kappa);
  }
  return vmf::fit_em(sample, r, rng).mixture;
}

std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

vmf::VmfMixture preset(const std::string& name, int d) {
  if (d < 1 || d > 10)
    throw std::invalid_argument("preset: dimension must lie in [1, 10]");
  const double kappa = 5.0;
  if (name == "vmf") return vmf::VmfMixture::single(sphere::UnitVector::axis(d, 0), kappa);
  if (name == "mvmf") {
    std::vector<vmf::VmfComponent> comps;
    for (int axis_index : {0, d}) {
      for (double sign : {1.0, -1.0}) {
        std::vector<double> coords(static_cast<std::size_t>(d) + 1, 0.0);
        coords[static_cast<std::size_t>(axis_index)] = sign;
        comps.push_back({sphere::UnitVector(std::move(coords)), kappa});
      }
    }
    return vmf::VmfMixture(std::move(comps), std::vector<double>(4, 0.25));
  }
  throw std::invalid_argument("preset: unknown name '" + name + "'");
}

const char* method_name(optimize::Method m) {
  switch (m) {
    case optimize::Method::kCv:
      return "cv";
    case optimize::Method::kAmi:
      return "ami";
    case optimize::Method::kEmi:
      return "emi";
    case optimize::Method::kMiseOracle:
      return "mise_oracle";
    case optimize::Method::kIseOracle:
      return "ise_oracle";
  }
  throw std::logic_error("method_name: unhandled method");
}

optimize::Method method_from_name(const std::string& name) {
  if (name == "cv") return optimize::Method::kCv;
  if (name == "ami") return optimize::Method::kAmi;
  if (name == "emi") return optimize::Method::kEmi;
  if (name == "mise_oracle") return optimize::Method::kMiseOracle;
  if (name == "ise_oracle") return optimize::Method::kIseOracle;
  throw std::invalid_argument("unknown selector name '" + name + "'");
}

ExperimentConfig config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("experiment config: ") + e.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("experiment config: expected a JSON object");

  static const std::set<std::string> known = {"truth", "dims",  "log2_n",    "M",   "selectors",
                                              "B",     "seed", "n_min_fit", "trim"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key()))
      throw std::invalid_argument("experiment config: unknown key '" + item.key() + "'");
  }

  ExperimentConfig cfg;
  try {
    if (j.contains("truth")) {
      const auto& t = j.at("truth");
      if (t.is_string()) {
        cfg.preset = t.get<std::string>();
      } else {
        cfg.preset = "custom";
        cfg.custom_truth = vmf::parse_mixture_json(t.dump());
      }
    }
    if (j.contains("dims")) cfg.dims = j.at("dims").get<std::vector<int>>();
    if (j.contains("log2_n")) cfg.log2_n = j.at("log2_n").get<std::vector<double>>();
    if (j.contains("M")) cfg.replicates = j.at("M").get<int>();
    if (j.contains("selectors")) {
      cfg.selectors.clear();
      for (const auto& s : j.at("selectors"))
        cfg.selectors.push_back(method_from_name(s.get<std::string>()));
    }
    if (j.contains("B")) cfg.is_draws = j.at("B").get<std::size_t>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("n_min_fit")) cfg.n_min_fit = j.at("n_min_fit").get<std::size_t>();
    if (j.contains("trim")) cfg.trim = j.at("trim").get<double>();
  } catch (const nlohmann::json::type_error& e) {
    throw std::invalid_argument(std::string("experiment config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("could not open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

RateStudy run_rate_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg, true);
  RateStudy study;
  study.selectors = cfg.selectors;
  const std::size_t n_selectors = cfg.selectors.size();
  const std::size_t m = static_cast<std::size_t>(cfg.replicates);
  const std::size_t n_min =
      cfg.n_min_fit > 0 ? cfg.n_min_fit : (cfg.preset == "mvmf" ? 512 : 128);

  for (std::size_t di = 0; di < cfg.dims.size(); ++di) {
    const int d = cfg.dims[di];
    const vmf::VmfMixture truth = resolve_truth(cfg, d);
    const std::size_t r = truth.size();
    const auto rates = asymptotics::rate_exponents(d);
    const auto dim_tag = static_cast<std::uint64_t>(d);

    for (std::size_t li = 0; li < cfg.log2_n.size(); ++li) {
      const std::size_t n = sample_size_for(cfg.log2_n[li]);
      CellResult cell;
      cell.d = d;
      cell.n = n;

      // One oracle bandwidth per cell; it is sample-free and shared by all
      // replicates, including the mise_oracle pseudo-selector.
      auto oracle_rng = util::make_rng(cfg.seed, {kTagOracle, dim_tag, li});
      auto oracle = optimize::select_mise_oracle(truth, n, oracle_rng, cfg.is_draws);
      cell.h_mise = oracle.h;
      cell.h_mise_boundary = oracle.boundary_flag;

      if (std::isinf(oracle.h)) {
        cell.skipped = true;
        cell.skip_reason = "h_mise_infinite";
        cell.relative_errors.assign(n_selectors, {});
        cell.summaries.resize(n_selectors);
        cell.lilliefors_p.assign(n_selectors, kNan);
        cell.boundary_fraction.assign(n_selectors, kNan);
        cell.unstable.assign(n_selectors, false);
        study.cells.push_back(std::move(cell));
        continue;
      }

      cell.relative_errors.assign(n_selectors, std::vector<double>(m, 0.0));
      std::vector<std::vector<char>> flagged(n_selectors, std::vector<char>(m, 0));
      util::parallel_for(m, cfg.n_threads, [&](std::size_t j) {
        auto rng = util::make_rng(cfg.seed, {kTagReplicate, dim_tag, li, j});
        auto sample = vmf::sample(truth, n, rng);
        for (std::size_t s = 0; s < n_selectors; ++s) {
          auto out = run_selector(cfg.selectors[s], sample, truth, r, oracle.h,
                                  oracle.boundary_flag, rng, cfg.is_draws);
          cell.relative_errors[s][j] = (out.h - oracle.h) / oracle.h;
          flagged[s][j] = out.flagged ? 1 : 0;
        }
      });

      for (std::size_t s = 0; s < n_selectors; ++s) {
        const auto& errors = cell.relative_errors[s];
        double frac = 0.0;
        for (char f : flagged[s]) frac += f;
        frac /= static_cast<double>(m);
        cell.boundary_fraction.push_back(frac);
        cell.unstable.push_back(frac > 0.2);
        cell.summaries.push_back(stats::trimmed_summary(errors, cfg.trim));

        // Normality check of the rate-normalized errors n^{-beta*} R.
        double p = kNan;
        bool finite = std::all_of(errors.begin(), errors.end(),
                                  [](double v) { return std::isfinite(v); });
        if (m >= 4 && finite) {
          const double scale = std::pow(static_cast<double>(n),
                                        -beta_star_for(cfg.selectors[s], rates));
          std::vector<double> scaled(m);
          for (std::size_t j = 0; j < m; ++j) scaled[j] = scale * errors[j];
          auto lrng = util::make_rng(cfg.seed, {kTagLilliefors, dim_tag, li, s});
          p = stats::lilliefors(scaled, kLillieforsBoot, lrng, cfg.n_threads).p_value;
        }
        cell.lilliefors_p.push_back(p);
      }
      study.cells.push_back(std::move(cell));
    }

    for (std::size_t s = 0; s < n_selectors; ++s) {
      SelectorRateFit fit;
      fit.d = d;
      fit.method = cfg.selectors[s];
      fit.beta_star = beta_star_for(cfg.selectors[s], rates);

      std::vector<std::pair<double, double>> pairs;
      std::size_t usable = 0;
      for (std::size_t li = 0; li < cfg.log2_n.size(); ++li) {
        const CellResult& cell = study.cells[di * cfg.log2_n.size() + li];
        if (cell.skipped) continue;
        const double rmse = cell.summaries[s].rmse;
        if (!(std::isfinite(rmse) && rmse > 0.0)) continue;
        pairs.push_back({static_cast<double>(cell.n), rmse});
        if (cell.n >= n_min) ++usable;
      }
      if (usable >= 2) {
        fit.fit = stats::loglog_fit(pairs, static_cast<double>(n_min), fit.beta_star);
        fit.delta_pct = (fit.beta_star - fit.fit.slope) / std::fabs(fit.beta_star) * 100.0;
      } else {
        fit.fit.slope = kNan;
        fit.fit.intercept = kNan;
        fit.fit.r_squared = kNan;
        fit.fit.slope_se = kNan;
        fit.fit.p_value_onesided = kNan;
        fit.fit.n_points = usable;
        fit.fit.se_defined = false;
        fit.delta_pct = kNan;
      }
      study.fits.push_back(std::move(fit));
    }
  }
  return study;
}

ErrorStudy run_density_error_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg, false);
  ErrorStudy study;
  study.selectors = cfg.selectors;
  if (std::find(study.selectors.begin(), study.selectors.end(),
                optimize::Method::kIseOracle) == study.selectors.end())
    study.selectors.push_back(optimize::Method::kIseOracle);
  const std::size_t n_selectors = study.selectors.size();
  const std::size_t m = static_cast<std::size_t>(cfg.replicates);
  const bool wants_mise = std::find(study.selectors.begin(), study.selectors.end(),
                                    optimize::Method::kMiseOracle) != study.selectors.end();

  for (std::size_t di = 0; di < cfg.dims.size(); ++di) {
    const int d = cfg.dims[di];
    const vmf::VmfMixture truth = resolve_truth(cfg, d);
    const std::size_t r = truth.size();
    const auto dim_tag = static_cast<std::uint64_t>(d);

    for (std::size_t li = 0; li < cfg.log2_n.size(); ++li) {
      const std::size_t n = sample_size_for(cfg.log2_n[li]);
      ErrorCell cell;
      cell.d = d;
      cell.n = n;
      cell.l2_errors.assign(n_selectors, std::vector<double>(m, 0.0));
      cell.parametric_errors.assign(m, 0.0);

      double h_mise = kNan;
      bool h_mise_flag = false;
      if (wants_mise) {
        auto oracle_rng = util::make_rng(cfg.seed, {kTagOracle, dim_tag, li});
        auto oracle = optimize::select_mise_oracle(truth, n, oracle_rng, cfg.is_draws);
        h_mise = oracle.h;
        h_mise_flag = oracle.boundary_flag;
      }

      auto pilot_rng = util::make_rng(cfg.seed, {kTagPilot, dim_tag, li});
      auto pilot = optimize::ami_for_mixture(truth, n, pilot_rng);
      const std::vector<double> base_grid =
          std::isinf(pilot.h) ? std::vector<double>{} : optimize::mise_grid(pilot.h);

      util::parallel_for(m, cfg.n_threads, [&](std::size_t j) {
        auto rng = util::make_rng(cfg.seed, {kTagErrorReplicate, dim_tag, li, j});
        auto sample = vmf::sample(truth, n, rng);

        std::vector<double> hs(n_selectors, kInf);
        for (std::size_t s = 0; s < n_selectors; ++s) {
          if (study.selectors[s] == optimize::Method::kIseOracle) continue;
          hs[s] = run_selector(study.selectors[s], sample, truth, r, h_mise, h_mise_flag,
                               rng, cfg.is_draws)
                      .h;
        }

        // One frozen draw set scores every bandwidth in this replicate, so
        // the oracle minimum is an exact lower bound for the other columns.
        auto ys = vmf::sample(truth, cfg.is_draws, rng);
        std::vector<double> gy(cfg.is_draws);
        for (std::size_t b = 0; b < cfg.is_draws; ++b) gy[b] = truth.density(ys.point(b));
        auto ise_metric = [&](double h) {
          kde::KdeModel model(sample, h);
          std::vector<double> fy = model.evaluate_batch(ys);
          double acc = 0.0;
          for (std::size_t b = 0; b < cfg.is_draws; ++b) {
            const double diff = fy[b] - gy[b];
            acc += diff * diff / gy[b];
          }
          return acc / static_cast<double>(cfg.is_draws);
        };

        std::vector<double> grid = base_grid;
        for (double h : hs) {
          if (std::isfinite(h) && h > 0.0) grid.push_back(h);
        }
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
        double best = ise_metric(kInf);
        if (!grid.empty())
          best = std::min(best, optimize::minimize_1d(ise_metric, grid).criterion_value);

        for (std::size_t s = 0; s < n_selectors; ++s) {
          double value = study.selectors[s] == optimize::Method::kIseOracle
                             ? best
                             : ise_metric(hs[s]);
          cell.l2_errors[s][j] = std::sqrt(std::max(0.0, value));
        }
        cell.parametric_errors[j] =
            mixture_l2_distance(fit_parametric(sample, r, rng), truth);
      });

      cell.mean_l2.assign(n_selectors, 0.0);
      for (std::size_t s = 0; s < n_selectors; ++s) {
        double acc = 0.0;
        for (double v : cell.l2_errors[s]) acc += v;
        cell.mean_l2[s] = acc / static_cast<double>(m);
      }
      double acc = 0.0;
      for (double v : cell.parametric_errors) acc += v;
      cell.parametric_mean = acc / static_cast<double>(m);
      study.cells.push_back(std::move(cell));
    }
  }
  return study;
}

std::string cells_csv(const RateStudy& study) {
  std::ostringstream os;
  os << "d,n,selector,mean,rmse,median,lilliefors_p,skipped\n";
  for (const CellResult& cell : study.cells) {
    for (std::size_t s = 0; s < study.selectors.size(); ++s) {
      std::string note = cell.skipped ? cell.skip_reason
                                      : (cell.unstable[s] ? std::string("unstable")
                                                          : std::string());
      os << cell.d << ',' << cell.n << ',' << method_name(study.selectors[s]) << ','
         << fmt_num(cell.skipped ? kNan : cell.summaries[s].mean) << ','
         << fmt_num(cell.skipped ? kNan : cell.summaries[s].rmse) << ','
         << fmt_num(cell.skipped ? kNan : cell.summaries[s].median) << ','
         << fmt_num(cell.lilliefors_p[s]) << ',' << note << '\n';
    }
  }
  return os.str();
}

std::string fits_csv(const RateStudy& study) {
  std::ostringstream os;
  os << "d,selector,beta_hat,beta_star,delta_pct,r2,p_onesided\n";
  for (const SelectorRateFit& f : study.fits) {
    os << f.d << ',' << method_name(f.method) << ',' << fmt_num(f.fit.slope) << ','
       << fmt_num(f.beta_star) << ',' << fmt_num(f.delta_pct) << ','
       << fmt_num(f.fit.r_squared) << ',' << fmt_num(f.fit.p_value_onesided) << '\n';
  }
  return os.str();
}

std::string errors_csv(const ErrorStudy& study) {
  std::ostringstream os;
  os << "d,n,selector,mean_l2_error\n";
  for (const ErrorCell& cell : study.cells) {
    for (std::size_t s = 0; s < study.selectors.size(); ++s) {
      os << cell.d << ',' << cell.n << ',' << method_name(study.selectors[s]) << ','
         << fmt_num(cell.mean_l2[s]) << '\n';
    }
    os << cell.d << ',' << cell.n << ",parametric," << fmt_num(cell.parametric_mean) << '\n';
  }
  return os.str();
}

}  // namespace sphkde::experiments
