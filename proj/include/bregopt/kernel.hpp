#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "bregopt/dense_matrix.hpp"
#include "bregopt/prng.hpp"

namespace bregopt {

/// The optimization variable x = (U, V) of a rank-r factorization M ~ U V.
struct FactorPair {
  DenseMatrix u;  // m x r
  DenseMatrix v;  // r x d

  FactorPair() = default;
  FactorPair(DenseMatrix u_in, DenseMatrix v_in);

  std::size_t m() const noexcept { return u.rows(); }
  std::size_t rank() const noexcept { return u.cols(); }
  std::size_t d() const noexcept { return v.cols(); }

  bool same_shape(const FactorPair& other) const noexcept {
    return u.same_shape(other.u) && v.same_shape(other.v);
  }

  FactorPair& operator+=(const FactorPair& other);
  FactorPair& operator-=(const FactorPair& other);
  FactorPair& operator*=(double alpha);

  bool operator==(const FactorPair& other) const = default;

  static FactorPair zeros(std::size_t m, std::size_t r, std::size_t d);
};

FactorPair operator+(FactorPair a, const FactorPair& b);
FactorPair operator-(FactorPair a, const FactorPair& b);
FactorPair operator*(double alpha, FactorPair a);

/// y += alpha * x
void axpy(double alpha, const FactorPair& x, FactorPair& y);
double squared_norm(const FactorPair& x);
double norm(const FactorPair& x);
double dot(const FactorPair& x, const FactorPair& y);
bool all_finite(const FactorPair& x);
double max_abs_diff(const FactorPair& x, const FactorPair& y);
void require_same_shape(const FactorPair& x, const FactorPair& y, const char* what);

/// psi(U, V) = a * (s/2)^2 + b * s/2 + (c/2) ||U||^2 with s = ||U||^2 + ||V||^2.
///
/// The first two terms are the quartic and quadratic kernels shared by every
/// factorization model here; c adds extra curvature on the U block only.
struct KernelSpec {
  double quartic = 0.0;      // a
  double quadratic = 0.0;    // b
  double u_quadratic = 0.0;  // c

  KernelSpec() = default;
  /// Throws on negative or non-finite coefficients and on a + b + c == 0.
  KernelSpec(double a, double b, double c = 0.0);

  /// True when the quadratic part is degenerate (b + c == 0), i.e. no strong
  /// convexity; construction is allowed but callers may warn.
  bool lacks_strong_convexity() const noexcept { return quadratic + u_quadratic == 0.0; }
};

double kernel_value(const KernelSpec& k, const FactorPair& x);
FactorPair kernel_gradient(const KernelSpec& k, const FactorPair& x);
/// D(x, y) = psi(x) - psi(y) - <grad psi(y), x - y>. Throws on shape mismatch.
double bregman_distance(const KernelSpec& k, const FactorPair& x, const FactorPair& y);

/// f value and gradient at a point.
struct ValueGradient {
  double value = 0.0;
  FactorPair gradient;
};
using ObjectiveCallback = std::function<ValueGradient(const FactorPair&)>;

struct SmoothAdaptableReport {
  std::size_t samples = 0;
  /// max over pairs of (D_f - L_bar D_psi)_+ / (1 + |f(x)|)
  double max_upper_violation = 0.0;
  /// max over pairs of (-L_under D_psi - D_f)_+ / (1 + |f(x)|)
  double max_lower_violation = 0.0;
  std::size_t upper_violations = 0;
  std::size_t lower_violations = 0;
  bool passed = true;
};

/// Samples `samples` random pairs (x, y) with entries uniform in [box_lo, box_hi]
/// and shapes taken from `shape`, and checks
///   -L_under D_psi(x,y) <= f(x) - f(y) - <grad f(y), x - y> <= L_bar D_psi(x,y).
/// A pair violates when the excess exceeds 1e-8 (1 + |f(x)|). Never throws on
/// violations; they are reported.
SmoothAdaptableReport check_smooth_adaptable(const ObjectiveCallback& f, const KernelSpec& k,
                                             double l_bar, double l_under, std::size_t samples,
                                             const FactorPair& shape, Prng& rng, double box_lo = 0.0,
                                             double box_hi = 1.0);

}  // namespace bregopt
