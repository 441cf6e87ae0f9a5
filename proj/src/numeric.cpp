#include "bregopt/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace bregopt {

double cubic_root(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("cubic_root: non-finite coefficient");
  if (a < 0.0) throw std::invalid_argument("cubic_root: cubic coefficient must be nonnegative");
  if (b <= 0.0) throw std::invalid_argument("cubic_root: linear coefficient must be positive");

  const double hi0 = 1.0 / b;
  if (a == 0.0) return hi0;

  auto residual = [a, b](double t) { return (a * t * t + b) * t - 1.0; };

  // residual(0) = -1, residual(1/b) = a/b^3 > 0
  double lo = 0.0;
  double hi = hi0;
  // a large cubic term pushes the root towards a^{-1/3}; start from the smaller guess
  double t = std::min(hi0, std::cbrt(1.0 / a));
  for (int iter = 0; iter < 200; ++iter) {
    const double r = residual(t);
    if (r == 0.0) return t;
    if (r < 0.0) lo = t; else hi = t;
    const double slope = 3.0 * a * t * t + b;
    double next = t - r / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 4.0 * std::numeric_limits<double>::epsilon() * next) {
      t = next;
      break;
    }
    t = next;
  }
  return t;
}

std::vector<double> soft_threshold(std::span<const double> y, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("soft_threshold: tau must be nonnegative");
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double mag = std::abs(y[i]) - tau;
    out[i] = mag > 0.0 ? std::copysign(mag, y[i]) : 0.0;
  }
  return out;
}

DenseMatrix soft_threshold(const DenseMatrix& y, double tau) {
  auto values = soft_threshold(y.data(), tau);
  return DenseMatrix(y.rows(), y.cols(), std::move(values));
}

std::vector<double> hard_threshold(std::span<const double> y, std::size_t s) {
  if (s > y.size()) throw std::invalid_argument("hard_threshold: s exceeds vector length");
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return std::abs(y[i]) > std::abs(y[j]); });
  std::vector<double> out(y.size(), 0.0);
  for (std::size_t k = 0; k < s; ++k) out[order[k]] = y[order[k]];
  return out;
}

DenseMatrix hard_threshold_columns(const DenseMatrix& y, std::size_t s) {
  if (s > y.rows()) throw std::invalid_argument("hard_threshold_columns: s exceeds column length");
  DenseMatrix out(y.rows(), y.cols());
  for (std::size_t j = 0; j < y.cols(); ++j) {
    const auto col = hard_threshold(y.column(j), s);
    for (std::size_t i = 0; i < y.rows(); ++i) out(i, j) = col[i];
  }
  return out;
}

DenseMatrix hard_threshold_rows(const DenseMatrix& y, std::size_t s) {
  if (s > y.cols()) throw std::invalid_argument("hard_threshold_rows: s exceeds row length");
  DenseMatrix out(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto row = hard_threshold(y.row(i), s);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

DenseMatrix project_nonneg(const DenseMatrix& a) {
  DenseMatrix out = a;
  for (double& x : out.data()) x = std::max(x, 0.0);
  return out;
}

bool is_symmetric(const DenseMatrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

namespace {

double normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double& x : v) x /= n;
  return n;
}

std::vector<double> mat_vec(const DenseMatrix& a, const std::vector<double>& v) {
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * v[j];
    out[i] = s;
  }
  return out;
}

std::vector<double> mat_t_vec(const DenseMatrix& a, const std::vector<double>& v) {
  std::vector<double> out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j] * v[i];
  }
  return out;
}

}  // namespace

SpectralEstimate spectral_norm(const DenseMatrix& a, double tol, std::size_t max_iter, Prng& rng) {
  if (a.empty()) throw std::invalid_argument("spectral_norm: empty matrix");
  if (!(tol > 0.0)) throw std::invalid_argument("spectral_norm: tol must be positive");

  const bool symmetric = is_symmetric(a);
  std::vector<double> v(a.cols());
  for (double& x : v) x = rng.uniform(0.5, 1.5);
  normalize(v);

  SpectralEstimate est;
  double prev = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    std::vector<double> w = symmetric ? mat_vec(a, v) : mat_t_vec(a, mat_vec(a, v));
    const double norm_w = normalize(w);
    // ||A v|| for symmetric A, ||A^T A v|| (-> sigma^2) otherwise
    const double value = symmetric ? norm_w : std::sqrt(norm_w);
    est.value = value;
    est.iterations = it;
    if (norm_w == 0.0) {
      // v landed in the null space of a nonzero matrix: restart from a random vector
      bool nonzero = std::any_of(a.data().begin(), a.data().end(), [](double x) { return x != 0.0; });
      if (!nonzero) {
        est.converged = true;
        return est;
      }
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      normalize(v);
      prev = 0.0;
      continue;
    }
    if (it > 1 && std::abs(value - prev) <= tol * value) {
      est.converged = true;
      return est;
    }
    prev = value;
    v = std::move(w);
  }
  return est;
}

}  // namespace bregopt
