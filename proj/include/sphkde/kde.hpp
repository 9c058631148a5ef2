#pragma once

//! Kernel density estimation on S^d with the von Mises-Fisher kernel,
//! evaluated in log-sum-exp form.

#include <limits>
#include <span>
#include <vector>

#include "sphkde/sphere.hpp"

namespace sphkde::kde {

//! Estimator (1/n) sum_i f_vMF(x; X_i, 1/h^2). h = +infinity means the
//! uniform density 1/omega_d; the sample is shared, not copied.
class KdeModel {
 public:
  KdeModel(const sphere::SphericalSample& sample, double bandwidth);

  double bandwidth() const { return h_; }
  bool is_uniform() const { return h_ == std::numeric_limits<double>::infinity(); }
  int dim() const { return sample_->dim(); }
  const sphere::SphericalSample& sample() const { return *sample_; }

  double log_evaluate(std::span<const double> x) const;
  double evaluate(std::span<const double> x) const;
  double evaluate(const sphere::UnitVector& x) const { return evaluate(std::span<const double>(x.coords())); }
  double log_evaluate(const sphere::UnitVector& x) const {
    return log_evaluate(std::span<const double>(x.coords()));
  }

  std::vector<double> evaluate_batch(const sphere::SphericalSample& points) const;
  std::vector<double> evaluate_batch(const std::vector<sphere::UnitVector>& points) const;

 private:
  const sphere::SphericalSample* sample_;
  double h_;
  double inv_h2_ = 0.0;     // 1/h^2 (0 when uniform)
  double log_pref_ = 0.0;   // log c_d(1/h^2) + 1/h^2 - log n
  double log_unif_ = 0.0;   // -log omega_d
};

double evaluate(const KdeModel& model, const sphere::UnitVector& x);
std::vector<double> evaluate_batch(const KdeModel& model, const sphere::SphericalSample& points);

}  // namespace sphkde::kde
