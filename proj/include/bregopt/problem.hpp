#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bregopt/dense_matrix.hpp"
#include "bregopt/kernel.hpp"

namespace bregopt {

enum class ProblemKind { GNMF, WCMF, SSNMF };

std::string_view to_string(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view name);

/// One of the three factorization models over a data matrix M (m x d).
///
///   GNMF : 1/2 ||M - UV||^2 + mu0/2 Tr(U^T L U),   U, V >= 0
///   WCMF : 1/2 ||M - UV||^2 + lambda1 ||U||_1 - lambda2/2 ||U||^2
///   SSNMF: 1/2 ||M - UV||^2,  U, V >= 0, ||U(:,i)||_0 <= s1, ||V(j,:)||_0 <= s2
///
/// The smooth part is split over the d columns of M:
///   f_i(U,V) = d/2 ||M(:,i) - U V(:,i)||^2 + mu0/2 Tr(U^T L U),
/// so the graph term enters every sample at full weight.
///
/// Construct through the named factories; they validate the model invariants
/// and cache the norms the kernels and step sizes need.
class ProblemSpec {
 public:
  static ProblemSpec gnmf(DenseMatrix m, std::size_t rank, double mu0, DenseMatrix laplacian);
  static ProblemSpec wcmf(DenseMatrix m, std::size_t rank, double lambda1, double lambda2);
  static ProblemSpec ssnmf(DenseMatrix m, std::size_t rank, std::size_t s1, std::size_t s2);

  ProblemKind kind() const noexcept { return kind_; }
  const DenseMatrix& data() const noexcept { return m_; }
  const DenseMatrix& laplacian() const noexcept { return laplacian_; }
  std::size_t rank() const noexcept { return rank_; }
  std::size_t rows() const noexcept { return m_.rows(); }
  /// Number of samples n in the finite sum (columns of M).
  std::size_t samples() const noexcept { return m_.cols(); }
  double mu0() const noexcept { return mu0_; }
  double lambda1() const noexcept { return lambda1_; }
  double lambda2() const noexcept { return lambda2_; }
  std::size_t s1() const noexcept { return s1_; }
  std::size_t s2() const noexcept { return s2_; }

  double data_norm() const noexcept { return m_norm_; }
  double laplacian_frobenius() const noexcept { return l_frobenius_; }
  double laplacian_spectral() const noexcept { return l_spectral_; }

  /// Weak-convexity modulus of the nonsmooth part (lambda2 for WCMF, else 0).
  double weak_convexity() const noexcept { return kind_ == ProblemKind::WCMF ? lambda2_ : 0.0; }

  /// Non-fatal invariant warnings gathered at construction (e.g. lambda1 <= lambda2).
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  void require_shape(const FactorPair& x) const;

 private:
  ProblemSpec() = default;
  void cache_norms();

  ProblemKind kind_ = ProblemKind::GNMF;
  DenseMatrix m_;
  DenseMatrix laplacian_;
  std::size_t rank_ = 0;
  double mu0_ = 0.0;
  double lambda1_ = 0.0;
  double lambda2_ = 0.0;
  std::size_t s1_ = 0;
  std::size_t s2_ = 0;
  double m_norm_ = 0.0;
  double l_frobenius_ = 0.0;
  double l_spectral_ = 0.0;
  std::vector<std::string> warnings_;
};

/// Objective value with an explicit infeasibility flag in place of +inf.
struct ObjectiveValue {
  double value = 0.0;
  bool feasible = true;
};

/// Entries may dip below zero by this much before an iterate counts as infeasible.
inline constexpr double kFeasibilityTolerance = 1e-12;

/// f(x) + h(x). Constraint violations in GNMF/SSNMF yield feasible = false.
ObjectiveValue objective(const ProblemSpec& p, const FactorPair& x);
/// The smooth part f alone.
double smooth_value(const ProblemSpec& p, const FactorPair& x);
/// The nonsmooth part h (finite part only; constraints are checked by is_feasible).
double nonsmooth_value(const ProblemSpec& p, const FactorPair& x);
bool is_feasible(const ProblemSpec& p, const FactorPair& x);

FactorPair full_gradient(const ProblemSpec& p, const FactorPair& x);

/// Mean of grad f_i over the given column indices. Throws on an empty, repeated
/// or out-of-range index set.
FactorPair sample_gradient(const ProblemSpec& p, const FactorPair& x, std::span<const std::size_t> batch);

/// The kernel each model is paired with for step size eta:
///   GNMF : a = 3, b = ||M||_F + mu0 ||L||_F, c = 0
///   WCMF : a = 3, b = ||M||_F,              c = eta * lambda2
///   SSNMF: a = 3, b = ||M||_F,              c = 0
KernelSpec prescribed_kernel(const ProblemSpec& p, double eta);

/// Closed-form solution of
///   argmin_x  eta h(x) + <eta g, x> + psi(x) - <grad psi(x_bar), x>.
///
/// With P = eta g_U - grad_U psi(x_bar), Q = eta g_V - grad_V psi(x_bar), the
/// model's operator (projection / soft threshold / projection then hard
/// threshold) maps (-P, -Q) to a direction (A, B); the result is t (A, B) with
/// t the root of 3(||A||^2 + ||B||^2) t^3 + b t - 1 = 0.
///
/// Throws if `k` is not the model's prescribed kernel for `eta`.
FactorPair prox_step(const ProblemSpec& p, const KernelSpec& k, const FactorPair& g,
                     const FactorPair& x_bar, double eta);

/// The value minimized by prox_step; used by oracles and diagnostics. Returns
/// +inf for infeasible x.
double prox_subproblem_value(const ProblemSpec& p, const KernelSpec& k, const FactorPair& g,
                             const FactorPair& x_bar, double eta, const FactorPair& x);

enum class EdgeWeighting { Binary, Heat };

struct LaplacianOptions {
  std::size_t neighbors = 5;
  EdgeWeighting weighting = EdgeWeighting::Binary;
  double sigma = 1.0;  // heat kernel width
};

/// L = D - W over the rows of `samples` with W the symmetrized (max(W, W^T))
/// p-nearest-neighbour graph in Euclidean distance. Neighbour ties resolve to
/// the lower row index. Throws if neighbors >= rows.
DenseMatrix build_knn_laplacian(const DenseMatrix& samples, const LaplacianOptions& options);

}  // namespace bregopt
