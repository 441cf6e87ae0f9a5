#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bregopt/dense_matrix.hpp"
#include "bregopt/prng.hpp"

namespace bregopt {

/// Unique nonnegative root of a*t^3 + b*t - 1 = 0 for a >= 0, b > 0.
///
/// Safeguarded Newton from min(1/b, a^(-1/3)), falling back to bisection on the bracket
/// [0, 1/b] whenever a Newton step leaves it. Throws std::invalid_argument on
/// a < 0, b <= 0 or non-finite input.
double cubic_root(double a, double b);

/// Elementwise max(|y| - tau, 0) * sign(y).
std::vector<double> soft_threshold(std::span<const double> y, double tau);
DenseMatrix soft_threshold(const DenseMatrix& y, double tau);

/// Keeps the s entries of largest magnitude and zeros the rest. Equal
/// magnitudes at the cut keep the lower index.
std::vector<double> hard_threshold(std::span<const double> y, std::size_t s);

/// Hard-thresholds each column (s per column).
DenseMatrix hard_threshold_columns(const DenseMatrix& y, std::size_t s);
/// Hard-thresholds each row (s per row).
DenseMatrix hard_threshold_rows(const DenseMatrix& y, std::size_t s);

DenseMatrix project_nonneg(const DenseMatrix& a);

struct SpectralEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Largest singular value by power iteration.
///
/// Square symmetric inputs iterate on A directly (the spectral norm is then the
/// largest |eigenvalue|); anything else iterates on A^T A. Stops when the
/// relative change of the estimate drops below `tol`. Throws on empty input.
SpectralEstimate spectral_norm(const DenseMatrix& a, double tol, std::size_t max_iter, Prng& rng);

bool is_symmetric(const DenseMatrix& a, double tol = 0.0);

}  // namespace bregopt
