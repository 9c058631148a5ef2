#pragma once

//! Points on S^d, uniform sampling, tangent frames, low-dimensional
//! quadrature rules, and the CSV sample format.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sphkde::sphere {

//! A point of S^d subset R^{d+1}; renormalized on construction.
//! Throws std::invalid_argument for (near-)zero input.
class UnitVector {
 public:
  explicit UnitVector(std::vector<double> coords);

  int dim() const { return static_cast<int>(coords_.size()) - 1; }
  const std::vector<double>& coords() const { return coords_; }
  double operator[](std::size_t i) const { return coords_[i]; }

  double dot(const UnitVector& o) const;
  double dot(std::span<const double> o) const;

  //! Standard basis vector e_axis on S^d.
  static UnitVector axis(int d, int axis_index = 0);

 private:
  std::vector<double> coords_;
};

//! n points on S^d, stored dense row-major for cache-friendly pair loops.
class SphericalSample {
 public:
  SphericalSample(int d, std::size_t n);  // uninitialized slots, filled via set()

  int dim() const { return d_; }
  std::size_t size() const { return n_; }
  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * (d_ + 1), static_cast<std::size_t>(d_ + 1)};
  }
  const std::vector<double>& raw() const { return coords_; }

  void set(std::size_t i, const UnitVector& x);
  void set(std::size_t i, std::span<const double> x);  // renormalizes
  UnitVector unit(std::size_t i) const;

 private:
  int d_;
  std::size_t n_;
  std::vector<double> coords_;
};

//! i.i.d. uniform points on S^d (normalized Gaussians).
SphericalSample sample_uniform(int d, std::size_t n, std::mt19937_64& rng);

//! Columns complete x to an orthonormal basis of R^{d+1}: B^T B = I_d,
//! B B^T = I - x x^T. Returned row-major, (d+1) rows and d columns.
std::vector<double> tangent_frame(const UnitVector& x);

//! Surface-measure quadrature; supported for d in {1, 2} only.
struct QuadratureRule {
  int d;
  std::vector<std::vector<double>> nodes;  // unit vectors
  std::vector<double> weights;             // sum = omega_d
};

//! d=1: m equally spaced angles with weight 2*pi/m.
//! d=2: product rule, m Gauss-Legendre nodes in cos(theta) crossed with
//! 2m equally spaced angles in phi (2m^2 nodes total).
QuadratureRule quadrature(int d, int m);

//! CSV with header x0,...,xd; one unit vector per row. Rows whose norm
//! deviates from 1 by more than 1e-3 are rejected (std::runtime_error);
//! accepted rows are renormalized.
SphericalSample load_sample_csv(const std::string& path);
void save_sample_csv(const SphericalSample& sample, const std::string& path);

}  // namespace sphkde::sphere
