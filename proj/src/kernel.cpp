#include "bregopt/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bregopt {

FactorPair::FactorPair(DenseMatrix u_in, DenseMatrix v_in) : u(std::move(u_in)), v(std::move(v_in)) {
  if (u.cols() != v.rows()) throw std::invalid_argument("FactorPair: inner dimension mismatch");
}

FactorPair& FactorPair::operator+=(const FactorPair& other) {
  u += other.u;
  v += other.v;
  return *this;
}

FactorPair& FactorPair::operator-=(const FactorPair& other) {
  u -= other.u;
  v -= other.v;
  return *this;
}

FactorPair& FactorPair::operator*=(double alpha) {
  u *= alpha;
  v *= alpha;
  return *this;
}

FactorPair FactorPair::zeros(std::size_t m, std::size_t r, std::size_t d) {
  return FactorPair(DenseMatrix(m, r), DenseMatrix(r, d));
}

FactorPair operator+(FactorPair a, const FactorPair& b) { return a += b; }
FactorPair operator-(FactorPair a, const FactorPair& b) { return a -= b; }
FactorPair operator*(double alpha, FactorPair a) { return a *= alpha; }

void axpy(double alpha, const FactorPair& x, FactorPair& y) {
  axpy(alpha, x.u, y.u);
  axpy(alpha, x.v, y.v);
}

double squared_norm(const FactorPair& x) { return squared_norm(x.u) + squared_norm(x.v); }
double norm(const FactorPair& x) { return std::sqrt(squared_norm(x)); }
double dot(const FactorPair& x, const FactorPair& y) { return dot(x.u, y.u) + dot(x.v, y.v); }
bool all_finite(const FactorPair& x) { return all_finite(x.u) && all_finite(x.v); }

double max_abs_diff(const FactorPair& x, const FactorPair& y) {
  return std::max(max_abs_diff(x.u, y.u), max_abs_diff(x.v, y.v));
}

void require_same_shape(const FactorPair& x, const FactorPair& y, const char* what) {
  require_same_shape(x.u, y.u, what);
  require_same_shape(x.v, y.v, what);
}

KernelSpec::KernelSpec(double a, double b, double c) : quartic(a), quadratic(b), u_quadratic(c) {
  for (double coeff : {a, b, c}) {
    if (!std::isfinite(coeff) || coeff < 0.0)
      throw std::invalid_argument("KernelSpec: coefficients must be finite and nonnegative");
  }
  if (a + b + c == 0.0) throw std::invalid_argument("KernelSpec: all coefficients are zero");
}

double kernel_value(const KernelSpec& k, const FactorPair& x) {
  const double nu = squared_norm(x.u);
  const double half_s = 0.5 * (nu + squared_norm(x.v));
  return k.quartic * half_s * half_s + k.quadratic * half_s + 0.5 * k.u_quadratic * nu;
}

FactorPair kernel_gradient(const KernelSpec& k, const FactorPair& x) {
  const double s = squared_norm(x);
  FactorPair g = x;
  g.u *= k.quartic * s + k.quadratic + k.u_quadratic;
  g.v *= k.quartic * s + k.quadratic;
  return g;
}

double bregman_distance(const KernelSpec& k, const FactorPair& x, const FactorPair& y) {
  require_same_shape(x, y, "bregman_distance");
  const FactorPair grad_y = kernel_gradient(k, y);
  return kernel_value(k, x) - kernel_value(k, y) - dot(grad_y, x - y);
}

namespace {

FactorPair random_point(const FactorPair& shape, Prng& rng, double lo, double hi) {
  FactorPair x = shape;
  for (double& e : x.u.data()) e = rng.uniform(lo, hi);
  for (double& e : x.v.data()) e = rng.uniform(lo, hi);
  return x;
}

}  // namespace

SmoothAdaptableReport check_smooth_adaptable(const ObjectiveCallback& f, const KernelSpec& k,
                                             double l_bar, double l_under, std::size_t samples,
                                             const FactorPair& shape, Prng& rng, double box_lo,
                                             double box_hi) {
  SmoothAdaptableReport report;
  report.samples = samples;
  for (std::size_t s = 0; s < samples; ++s) {
    const FactorPair x = random_point(shape, rng, box_lo, box_hi);
    const FactorPair y = random_point(shape, rng, box_lo, box_hi);
    const ValueGradient fx = f(x);
    const ValueGradient fy = f(y);
    const double df = fx.value - fy.value - dot(fy.gradient, x - y);
    const double dpsi = bregman_distance(k, x, y);
    const double scale = 1.0 + std::abs(fx.value);
    const double upper = std::max(0.0, df - l_bar * dpsi) / scale;
    const double lower = std::max(0.0, -l_under * dpsi - df) / scale;
    report.max_upper_violation = std::max(report.max_upper_violation, upper);
    report.max_lower_violation = std::max(report.max_lower_violation, lower);
    if (upper > 1e-8) ++report.upper_violations;
    if (lower > 1e-8) ++report.lower_violations;
  }
  report.passed = report.upper_violations == 0 && report.lower_violations == 0;
  return report;
}

}  // namespace bregopt
