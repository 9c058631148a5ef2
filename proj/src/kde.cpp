#include "sphkde/kde.hpp"

#include <cmath>
#include <stdexcept>

#include "sphkde/specfun.hpp"

namespace sphkde::kde {

KdeModel::KdeModel(const sphere::SphericalSample& sample, double bandwidth)
    : sample_(&sample), h_(bandwidth) {
  if (std::isnan(h_) || h_ <= 0.0) throw std::invalid_argument("KdeModel: bandwidth must be positive");
  const int d = sample.dim();
  log_unif_ = -specfun::log_surface_area(d);
  if (!is_uniform()) {
    inv_h2_ = 1.0 / (h_ * h_);
    // Kernel value at its mode is c e^{1/h^2}; the recentred exponent
    // (t - 1)/h^2 is <= 0, so every term is bounded by this prefactor.
    log_pref_ = specfun::log_c_vmf(d, inv_h2_) + inv_h2_ - std::log(static_cast<double>(sample.size()));
  }
}

double KdeModel::log_evaluate(std::span<const double> x) const {
  if (is_uniform()) return log_unif_;
  const int m = sample_->dim() + 1;
  const std::size_t n = sample_->size();
  const double* data = sample_->raw().data();
  // One pass for the max exponent, one for the sum: the largest recentred
  // exponent is (tmax - 1)/h^2 with tmax the best cosine.
  double tmax = -1.0;
  double s = 0.0;
  std::vector<double> dots(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = data + i * static_cast<std::size_t>(m);
    double t = 0.0;
    for (int k = 0; k < m; ++k) t += row[k] * x[static_cast<std::size_t>(k)];
    dots[i] = t;
    if (t > tmax) tmax = t;
  }
  const double top = (tmax - 1.0) * inv_h2_;
  for (std::size_t i = 0; i < n; ++i) s += std::exp((dots[i] - 1.0) * inv_h2_ - top);
  return log_pref_ + top + std::log(s);
}

double KdeModel::evaluate(std::span<const double> x) const { return std::exp(log_evaluate(x)); }

std::vector<double> KdeModel::evaluate_batch(const sphere::SphericalSample& points) const {
  if (points.dim() != dim()) throw std::invalid_argument("evaluate_batch: dimension mismatch");
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = evaluate(points.point(i));
  return out;
}

std::vector<double> KdeModel::evaluate_batch(const std::vector<sphere::UnitVector>& points) const {
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = evaluate(points[i]);
  return out;
}

double evaluate(const KdeModel& model, const sphere::UnitVector& x) { return model.evaluate(x); }

std::vector<double> evaluate_batch(const KdeModel& model, const sphere::SphericalSample& points) {
  return model.evaluate_batch(points);
}

}  // namespace sphkde::kde
