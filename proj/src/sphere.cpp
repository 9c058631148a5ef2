#include "sphkde/sphere.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace sphkde::sphere {

namespace {

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

void renormalize(std::vector<double>& v, const char* what) {
  const double r = norm_of(v);
  if (!std::isfinite(r) || r < 1e-12) {
    throw std::invalid_argument(std::string(what) + ": vector norm too small to normalize");
  }
  for (double& c : v) c /= r;
}

}  // namespace

UnitVector::UnitVector(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.size() < 2) {
    throw std::invalid_argument("UnitVector: need at least 2 coordinates (d >= 1)");
  }
  renormalize(coords_, "UnitVector");
}

double UnitVector::dot(const UnitVector& o) const { return dot(std::span<const double>(o.coords_)); }

double UnitVector::dot(std::span<const double> o) const {
  if (o.size() != coords_.size()) throw std::invalid_argument("UnitVector::dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < coords_.size(); ++i) s += coords_[i] * o[i];
  return s;
}

UnitVector UnitVector::axis(int d, int axis_index) {
  if (d < 1) throw std::invalid_argument("UnitVector::axis: d must be >= 1");
  if (axis_index < 0 || axis_index > d) throw std::invalid_argument("UnitVector::axis: index out of range");
  std::vector<double> c(static_cast<std::size_t>(d) + 1, 0.0);
  c[static_cast<std::size_t>(axis_index)] = 1.0;
  return UnitVector(std::move(c));
}

SphericalSample::SphericalSample(int d, std::size_t n) : d_(d), n_(n) {
  if (d < 1) throw std::invalid_argument("SphericalSample: d must be >= 1");
  coords_.assign(n * static_cast<std::size_t>(d + 1), 0.0);
}

void SphericalSample::set(std::size_t i, const UnitVector& x) {
  if (x.dim() != d_) throw std::invalid_argument("SphericalSample::set: dimension mismatch");
  double* dst = coords_.data() + i * (d_ + 1);
  for (int k = 0; k <= d_; ++k) dst[k] = x[static_cast<std::size_t>(k)];
}

void SphericalSample::set(std::size_t i, std::span<const double> x) {
  if (static_cast<int>(x.size()) != d_ + 1) {
    throw std::invalid_argument("SphericalSample::set: dimension mismatch");
  }
  std::vector<double> tmp(x.begin(), x.end());
  renormalize(tmp, "SphericalSample::set");
  double* dst = coords_.data() + i * (d_ + 1);
  for (int k = 0; k <= d_; ++k) dst[k] = tmp[static_cast<std::size_t>(k)];
}

UnitVector SphericalSample::unit(std::size_t i) const {
  auto p = point(i);
  return UnitVector(std::vector<double>(p.begin(), p.end()));
}

SphericalSample sample_uniform(int d, std::size_t n, std::mt19937_64& rng) {
  SphericalSample out(d, n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(d) + 1);
  for (std::size_t i = 0; i < n; ++i) {
    // A fresh Gaussian draw essentially never lands within 1e-12 of the
    // origin, but redrawing keeps the map into S^d total.
    for (;;) {
      for (double& c : v) c = gauss(rng);
      const double r = norm_of(v);
      if (r >= 1e-12) {
        std::vector<double> u = v;
        for (double& c : u) c /= r;
        out.set(i, std::span<const double>(u));
        break;
      }
    }
  }
  return out;
}

std::vector<double> tangent_frame(const UnitVector& x) {
  // Householder reflection H = I - 2 v v^T / (v^T v) with v = x + s e_0,
  // s = sign(x_0). Then H e_0 = -s x, so columns 1..d of H are an
  // orthonormal basis of the tangent space at x.
  const int d = x.dim();
  const int m = d + 1;
  const double s = (x[0] >= 0.0) ? 1.0 : -1.0;
  std::vector<double> v(x.coords());
  v[0] += s;
  double vtv = 0.0;
  for (double c : v) vtv += c * c;
  // vtv = 2 (1 + |x_0|) >= 2, never degenerate.
  std::vector<double> frame(static_cast<std::size_t>(m) * d);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < d; ++c) {
      const int hc = c + 1;  // skip column 0 (the +/-x direction)
      const double iden = (r == hc) ? 1.0 : 0.0;
      frame[static_cast<std::size_t>(r) * d + c] = iden - 2.0 * v[static_cast<std::size_t>(r)] * v[static_cast<std::size_t>(hc)] / vtv;
    }
  }
  return frame;
}

namespace {

//! Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_m.
void gauss_legendre(int m, std::vector<double>& z, std::vector<double>& w) {
  z.resize(static_cast<std::size_t>(m));
  w.resize(static_cast<std::size_t>(m));
  const int half = (m + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Chebyshev-like initial guess for the i-th root.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Evaluate P_m(x) and P_{m-1}(x) by the three-term recurrence.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = m * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    z[static_cast<std::size_t>(i)] = -x;
    z[static_cast<std::size_t>(m - 1 - i)] = x;
    const double wi = 2.0 / ((1.0 - x * x) * pp * pp);
    w[static_cast<std::size_t>(i)] = wi;
    w[static_cast<std::size_t>(m - 1 - i)] = wi;
  }
}

}  // namespace

QuadratureRule quadrature(int d, int m) {
  if (m < 1) throw std::invalid_argument("quadrature: m must be >= 1");
  const double two_pi = 2.0 * std::numbers::pi;
  QuadratureRule rule;
  rule.d = d;
  if (d == 1) {
    rule.nodes.reserve(static_cast<std::size_t>(m));
    rule.weights.assign(static_cast<std::size_t>(m), two_pi / m);
    for (int j = 0; j < m; ++j) {
      const double phi = two_pi * j / m;
      rule.nodes.push_back({std::cos(phi), std::sin(phi)});
    }
    return rule;
  }
  if (d == 2) {
    const int mphi = 2 * m;
    std::vector<double> z, w;
    gauss_legendre(m, z, w);
    rule.nodes.reserve(static_cast<std::size_t>(m) * mphi);
    rule.weights.reserve(static_cast<std::size_t>(m) * mphi);
    for (int i = 0; i < m; ++i) {
      const double zi = z[static_cast<std::size_t>(i)];
      const double rho = std::sqrt(std::max(0.0, 1.0 - zi * zi));
      for (int j = 0; j < mphi; ++j) {
        const double phi = two_pi * j / mphi;
        rule.nodes.push_back({rho * std::cos(phi), rho * std::sin(phi), zi});
        rule.weights.push_back(w[static_cast<std::size_t>(i)] * two_pi / mphi);
      }
    }
    return rule;
  }
  throw std::invalid_argument("quadrature: only d == 1 and d == 2 are supported");
}

SphericalSample load_sample_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_sample_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_sample_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  // Header must read x0,x1,...,xd.
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  if (cols.size() < 2) throw std::runtime_error("load_sample_csv: header needs at least x0,x1");
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] != "x" + std::to_string(k)) {
      throw std::runtime_error("load_sample_csv: bad header column '" + cols[k] + "', expected x" + std::to_string(k));
    }
  }
  const int d = static_cast<int>(cols.size()) - 1;

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(cols.size());
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      std::size_t pos = 0;
      double val = 0.0;
      try {
        val = std::stod(tok, &pos);
      } catch (const std::exception&) {
        throw std::runtime_error("load_sample_csv: non-numeric value at line " + std::to_string(lineno));
      }
      row.push_back(val);
    }
    if (row.size() != cols.size()) {
      throw std::runtime_error("load_sample_csv: wrong column count at line " + std::to_string(lineno));
    }
    const double r = norm_of(row);
    if (std::abs(r - 1.0) > 1e-3) {
      throw std::runtime_error("load_sample_csv: row at line " + std::to_string(lineno) +
                               " has norm " + std::to_string(r) + ", not a unit vector");
    }
    for (double& c : row) c /= r;
    rows.push_back(std::move(row));
  }

  SphericalSample out(d, rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.set(i, std::span<const double>(rows[i]));
  return out;
}

void save_sample_csv(const SphericalSample& sample, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_sample_csv: cannot open " + path + " for writing");
  out << std::setprecision(17);
  const int m = sample.dim() + 1;
  for (int k = 0; k < m; ++k) {
    if (k) out << ',';
    out << 'x' << k;
  }
  out << '\n';
  for (std::size_t i = 0; i < sample.size(); ++i) {
    auto p = sample.point(i);
    for (int k = 0; k < m; ++k) {
      if (k) out << ',';
      out << p[static_cast<std::size_t>(k)];
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_sample_csv: write failed for " + path);
}

}  // namespace sphkde::sphere
