#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "bregopt/kernel.hpp"
#include "bregopt/problem.hpp"
#include "bregopt/prng.hpp"

namespace bregopt {

enum class EstimatorKind { Full, SGD, SAGA, SARAH };

std::string_view to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(std::string_view name);

struct EstimatorOptions {
  EstimatorKind kind = EstimatorKind::Full;
  /// Minibatch size b; ignored (forced to n) for Full.
  std::size_t batch_size = 1;
  /// SARAH: probability 1/p of taking a full gradient.
  double restart_probability = 0.1;
};

/// Variance-reduction constants (tau, V1, V2, V_Gamma) of an estimator.
struct VarianceConstants {
  double tau = 1.0;
  double v1 = 0.0;
  double v2 = 0.0;
  double v_gamma = 0.0;
};

/// SAGA: tau = b/2n, V1 = M1^2, V2 = M1, V_Gamma = (2b + 4n) M1^2 / b^2.
VarianceConstants saga_constants(std::size_t n, std::size_t b, double m1);
/// SARAH: tau = 1/p, V1 = V_Gamma = 2 M1^2, V2 = 2 M1.
VarianceConstants sarah_constants(double restart_probability, double m1);

struct VarianceAudit {
  /// Gamma_{k+1} after the estimate at x_bar_k.
  double gamma = 0.0;
  /// Upsilon_{k+1}.
  double upsilon = 0.0;
  /// ||estimate - grad f(x_bar)||^2 actually realized.
  double realized_error = 0.0;
  /// False for estimators without a Gamma tracker (SGD).
  bool tracked = true;
  /// SAGA: stored running average agrees with the table mean (1e-10 relative).
  bool table_consistent = true;
};

/// Persistent state of one gradient estimator over one solver run.
///
/// The smooth part decomposes over columns of M. Stochastic kinds only sample
/// the data-fit term; the graph term of GNMF is the same for every sample, so
/// it is added exactly at x_bar and carries no variance.
///
/// SAGA keeps, for each sample i, the residual M(:,i) - U V(:,i) (m values),
/// the column V(:,i) (r values) and U^T residual (r values) from the point its
/// gradient was last evaluated, plus the running mean of the U-block
/// gradients. That is O(n (m + r)) memory instead of O(n m r).
class EstimatorState {
 public:
  EstimatorState(EstimatorOptions options, Prng rng);

  /// Seeds SAGA's table at x0 (one full-gradient cost). Must be called before
  /// `estimate`; a no-op for the other kinds.
  void initialize(const ProblemSpec& p, const FactorPair& x0);

  /// Stochastic gradient at x_bar; advances the RNG and the internal state.
  FactorPair estimate(const ProblemSpec& p, const FactorPair& x_bar);

  /// Gamma/Upsilon of the most recent `estimate` call. Costs a full gradient.
  VarianceAudit audit(const ProblemSpec& p, const FactorPair& x_bar, const FactorPair& estimate) const;

  EstimatorKind kind() const noexcept { return options_.kind; }
  std::size_t batch_size() const noexcept { return batch_; }
  std::size_t samples() const noexcept { return n_; }
  /// ceil(n / b) inner steps per epoch.
  std::size_t steps_per_epoch() const noexcept;

  const std::vector<std::size_t>& last_batch() const noexcept { return last_batch_; }
  /// True when the last estimate was an exact full gradient.
  bool last_was_full() const noexcept { return last_full_; }

  /// Max |stored average - recomputed table mean| for SAGA; 0 otherwise.
  double saga_average_drift() const;

 private:
  void store_saga_sample(const ProblemSpec& p, const FactorPair& x, std::size_t col);
  FactorPair estimate_saga(const ProblemSpec& p, const FactorPair& x_bar);
  FactorPair estimate_sarah(const ProblemSpec& p, const FactorPair& x_bar);

  EstimatorOptions options_;
  Prng rng_;
  std::size_t n_ = 0;
  std::size_t batch_ = 0;
  bool initialized_ = false;
  std::vector<std::size_t> last_batch_;
  bool last_full_ = false;

  // SAGA table
  DenseMatrix saga_residual_;  // n x m
  DenseMatrix saga_vcol_;      // n x r
  DenseMatrix saga_utres_;     // n x r, U^T residual
  DenseMatrix saga_avg_u_;     // m x r, sum_i residual_i vcol_i^T

  // SARAH recursion
  std::optional<FactorPair> sarah_prev_point_;
  std::optional<FactorPair> sarah_prev_estimate_;
};

/// One audited iteration k: Gamma_{k+1} together with Gamma_k and the squared
/// iterate movements ||x_k - x_{k-1}||^2 and ||x_{k-1} - x_{k-2}||^2.
struct DecaySample {
  double gamma_next = 0.0;
  double gamma = 0.0;
  double step_sq = 0.0;
  double prev_step_sq = 0.0;
};

struct DecayReport {
  std::size_t iterations = 0;
  std::size_t violations = 0;
  double violation_fraction = 0.0;
  bool passed = true;
};

/// Checks E_k[Gamma_{k+1}] <= (1 - tau) Gamma_k + V_Gamma (step_sq + prev_step_sq)
/// across independent runs (one inner vector per seed, aligned by iteration).
/// An iteration violates when the across-seed mean of the excess is more than
/// two standard errors above zero; passes when at most 5% of iterations violate.
DecayReport check_geometric_decay(const std::vector<std::vector<DecaySample>>& runs, double tau, double v_gamma);

}  // namespace bregopt
