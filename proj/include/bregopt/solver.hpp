#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bregopt/estimator.hpp"
#include "bregopt/kernel.hpp"
#include "bregopt/problem.hpp"
#include "bregopt/prng.hpp"

namespace bregopt {

/// BPG: full gradient, no extrapolation. BPGE: full gradient with extrapolation.
/// BPSG: stochastic, no extrapolation. BPSGE: stochastic with extrapolation.
enum class Algorithm { BPG, BPGE, BPSG, BPSGE };
enum class BetaMode { Scheduled, Safeguarded, Off };
enum class LowerSmoothnessMode { Zero, EqualToUpper };

std::string_view to_string(Algorithm a);
std::string_view to_string(BetaMode m);
std::string_view to_string(LowerSmoothnessMode m);
Algorithm parse_algorithm(std::string_view name);
BetaMode parse_beta_mode(std::string_view name);
LowerSmoothnessMode parse_lower_smoothness_mode(std::string_view name);

struct SolverConfig {
  Algorithm algorithm = Algorithm::BPSGE;
  EstimatorKind estimator = EstimatorKind::SAGA;
  std::size_t batch_size = 1;
  double sarah_restart_probability = 0.1;
  std::size_t max_epochs = 50;
  BetaMode beta_mode = BetaMode::Scheduled;
  double beta_scale = 0.6;
  double delta = 0.99;
  double epsilon = 0.01;
  double eta0 = 1.0;
  /// Relative smoothness constant of (f, psi); 1 for every prescribed kernel.
  double l_bar = 1.0;
  LowerSmoothnessMode l_under_mode = LowerSmoothnessMode::EqualToUpper;
  /// Audit every this many inner iterations (0 = off). The last inner
  /// iteration of each epoch is always audited when enabled.
  std::size_t audit_every = 0;
  std::uint64_t seed = 1;
  /// Lower bound on Phi used in the Lyapunov value.
  double phi_lower_bound = 0.0;
  /// Also cap eta by 1/l_bar and (1 - delta)/(alpha + 2 gamma).
  bool strict_theory_stepsize = false;
  /// Lipschitz constant M1 of the sample gradients for the variance constants;
  /// <= 0 uses the current power-method estimate L_k.
  double lipschitz_m1 = 0.0;
  /// Stop once the epoch's mean Bregman step stays below this for stop_patience epochs.
  double stop_tolerance = 1e-12;
  std::size_t stop_patience = 3;
  double eta_floor = 1e-8;

  /// Throws std::invalid_argument when inconsistent.
  void validate() const;
  /// Estimator actually used (BPG/BPGE force Full).
  EstimatorKind effective_estimator() const;
  /// Extrapolation mode actually used (BPG/BPSG force Off).
  BetaMode effective_beta_mode() const;
};

struct IterationTrace {
  std::size_t epoch = 0;
  double objective = 0.0;
  bool feasible = true;
  /// Mean of D_psi(x_{k-1}, x_k) over the epoch's inner iterations.
  double bregman_step = 0.0;
  std::optional<double> lyapunov;
  std::optional<double> stationarity;
  double eta = 0.0;
  /// Mean extrapolation parameter over the epoch.
  double beta = 0.0;
  std::optional<double> gamma_audit;
  double wall_ms = 0.0;
  bool eta_floor_hit = false;
};

/// One audited inner iteration k.
struct AuditRecord {
  std::size_t iteration = 0;
  VarianceAudit variance;
  /// ||x_k - x_{k-1}||^2 and ||x_{k-1} - x_{k-2}||^2
  double step_sq = 0.0;
  double prev_step_sq = 0.0;
};

enum class RunStatus { Ok, NumericalFailure };

struct RunResult {
  FactorPair x_final;
  /// Epoch-0 record at x0 (no step taken).
  IterationTrace initial;
  std::vector<IterationTrace> traces;
  std::vector<AuditRecord> audits;
  RunStatus status = RunStatus::Ok;
  std::string message;
  std::size_t iterations = 0;
  /// Every iterate after x0 was feasible. An SSNMF x0 may exceed the sparsity
  /// budgets; the first prox step enforces them.
  bool feasibility_maintained = true;
  bool eta_floor_hit = false;
  bool stopped_early = false;
};

struct Extrapolation {
  FactorPair x_bar;
  double beta = 0.0;
};

/// x_bar = x_k + beta (x_k - x_{k-1}).
///
/// Scheduled: beta = beta_scale (k-1)/(k+2). Safeguarded: the scheduled beta
/// is halved (at most 50 times, then 0) until
///   D(x_k, x_bar) <= (delta - epsilon) / (1 + l_under eta_{k-1}) D(x_{k-1}, x_k).
/// Off, or k == 0: beta = 0.
Extrapolation extrapolate(const FactorPair& x_k, const FactorPair& x_km1, std::size_t k, const SolverConfig& cfg,
                          const KernelSpec& kernel, double eta_km1, double l_under);

struct StepSize {
  double eta = 0.0;
  /// L_k = max(||V V^T|| + mu0 ||L||, ||U^T U||) at x_bar.
  double lipschitz = 0.0;
  bool floor_hit = false;
};

/// eta_k = min(eta_{k-1}, 1 / max(L_k, 1e-12)), floored at cfg.eta_floor.
StepSize step_size(const ProblemSpec& p, const FactorPair& x_bar, double eta_prev, const SolverConfig& cfg, Prng& rng);

/// Lipschitz estimate L_k alone (power iteration on the r x r Gram matrices).
double block_lipschitz(const ProblemSpec& p, const FactorPair& x_bar, Prng& rng);

struct LyapunovConstants {
  double alpha = 0.0;     // weak convexity of h
  double gamma = 0.0;     // sqrt(2 (V_Gamma / tau + V1))
  double tau = 1.0;
  double epsilon = 0.01;
  double phi_lower_bound = 0.0;
};

/// gamma = sqrt(2 (V_Gamma / tau + V1)).
double lyapunov_gamma(const VarianceConstants& c);

/// Psi_{k+1} = eta (Phi(x_{k+1}) - V) + t D(x_k, x_{k+1}) + eta (gamma/2 + epsilon/(3 eta)) D(x_{k-1}, x_k)
///             + eta Gamma_{k+1} / (2 tau gamma),
/// t = 1 - eta alpha - eta gamma - epsilon/3. The Gamma term is 0 when gamma == 0.
double lyapunov(double eta, double objective_next, double step_next, double step_prev, double gamma_next,
                const LyapunovConstants& c);

/// ||w|| with w = grad f(x_next) - g + (grad psi(x_bar) - grad psi(x_next)) / eta, an element of
/// the subdifferential of Phi at x_next.
double stationarity_witness(const ProblemSpec& p, const FactorPair& x_next, const FactorPair& x_bar,
                            const FactorPair& g, double eta, const KernelSpec& kernel);

/// Called after every inner iteration with the global iteration index and x_{k+1}.
using IterateObserver = std::function<void(std::size_t, const FactorPair&)>;

/// Runs the configured method from x0 for cfg.max_epochs epochs of ceil(n/b)
/// inner iterations each.
RunResult run(const ProblemSpec& p, const SolverConfig& cfg, const FactorPair& x0,
              const IterateObserver& observer = {});

struct RateReport {
  std::size_t checked = 0;
  std::size_t failures = 0;
  /// First K at which the bound failed, if any.
  std::optional<std::size_t> first_failure;
  bool passed = true;
};

/// For every K: min_{k <= K} mean_s D_k <= 1.1 * 3 mean_s(Psi_1) / (epsilon K),
/// where D_k is the epoch-k Bregman step and Psi_1 the first epoch's Lyapunov value.
RateReport rate_check(const std::vector<std::vector<IterationTrace>>& runs, double epsilon);

}  // namespace bregopt
