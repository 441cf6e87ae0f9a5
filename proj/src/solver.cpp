#include "bregopt/solver.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bregopt/numeric.hpp"

namespace bregopt {

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::BPG: return "BPG";
    case Algorithm::BPGE: return "BPGE";
    case Algorithm::BPSG: return "BPSG";
    case Algorithm::BPSGE: return "BPSGE";
  }
  return "unknown";
}

std::string_view to_string(BetaMode m) {
  switch (m) {
    case BetaMode::Scheduled: return "scheduled";
    case BetaMode::Safeguarded: return "safeguarded";
    case BetaMode::Off: return "off";
  }
  return "unknown";
}

std::string_view to_string(LowerSmoothnessMode m) {
  return m == LowerSmoothnessMode::Zero ? "zero" : "equal_to_L_bar";
}

Algorithm parse_algorithm(std::string_view name) {
  const std::string s = lowercase(name);
  if (s == "bpg") return Algorithm::BPG;
  if (s == "bpge") return Algorithm::BPGE;
  if (s == "bpsg") return Algorithm::BPSG;
  if (s == "bpsge") return Algorithm::BPSGE;
  throw std::invalid_argument("unknown algorithm: " + std::string(name));
}

BetaMode parse_beta_mode(std::string_view name) {
  const std::string s = lowercase(name);
  if (s == "scheduled") return BetaMode::Scheduled;
  if (s == "safeguarded") return BetaMode::Safeguarded;
  if (s == "off") return BetaMode::Off;
  throw std::invalid_argument("unknown beta mode: " + std::string(name));
}

LowerSmoothnessMode parse_lower_smoothness_mode(std::string_view name) {
  const std::string s = lowercase(name);
  if (s == "zero") return LowerSmoothnessMode::Zero;
  if (s == "equal_to_l_bar") return LowerSmoothnessMode::EqualToUpper;
  throw std::invalid_argument("unknown L_under mode: " + std::string(name));
}

void SolverConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < delta && delta < 1.0))
    throw std::invalid_argument("solver: need 0 < epsilon < delta < 1");
  if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw std::invalid_argument("solver: eta0 must be positive");
  if (!(l_bar > 0.0)) throw std::invalid_argument("solver: L_bar must be positive");
  if (!(beta_scale >= 0.0 && beta_scale < 1.0)) throw std::invalid_argument("solver: beta_scale must lie in [0, 1)");
  if (!(eta_floor > 0.0)) throw std::invalid_argument("solver: eta floor must be positive");
  const EstimatorKind est = effective_estimator();
  if (est != EstimatorKind::Full && batch_size == 0) throw std::invalid_argument("solver: batch size must be positive");
  if (est == EstimatorKind::SARAH && !(sarah_restart_probability > 0.0 && sarah_restart_probability <= 1.0))
    throw std::invalid_argument("solver: SARAH restart probability must lie in (0, 1]");
}

EstimatorKind SolverConfig::effective_estimator() const {
  if (algorithm == Algorithm::BPG || algorithm == Algorithm::BPGE) return EstimatorKind::Full;
  return estimator;
}

BetaMode SolverConfig::effective_beta_mode() const {
  if (algorithm == Algorithm::BPG || algorithm == Algorithm::BPSG) return BetaMode::Off;
  return beta_mode;
}

Extrapolation extrapolate(const FactorPair& x_k, const FactorPair& x_km1, std::size_t k, const SolverConfig& cfg,
                          const KernelSpec& kernel, double eta_km1, double l_under) {
  Extrapolation out{x_k, 0.0};
  const BetaMode mode = cfg.effective_beta_mode();
  if (k == 0 || mode == BetaMode::Off) return out;

  const double kd = static_cast<double>(k);
  double beta = cfg.beta_scale * (kd - 1.0) / (kd + 2.0);
  const FactorPair dir = x_k - x_km1;
  if (mode == BetaMode::Safeguarded && beta > 0.0) {
    const double rhs = (cfg.delta - cfg.epsilon) / (1.0 + l_under * eta_km1) * bregman_distance(kernel, x_km1, x_k);
    int halvings = 0;
    for (;;) {
      FactorPair candidate = x_k;
      axpy(beta, dir, candidate);
      if (bregman_distance(kernel, x_k, candidate) <= rhs) break;
      if (++halvings > 50) {
        beta = 0.0;
        break;
      }
      beta *= 0.5;
    }
  }
  out.beta = beta;
  if (beta != 0.0) axpy(beta, dir, out.x_bar);
  return out;
}

double block_lipschitz(const ProblemSpec& p, const FactorPair& x_bar, Prng& rng) {
  constexpr double kTol = 1e-12;
  constexpr std::size_t kMaxIter = 20000;
  const double u_block = spectral_norm(matmul_a_bt(x_bar.v, x_bar.v), kTol, kMaxIter, rng).value +
                         (p.kind() == ProblemKind::GNMF ? p.mu0() * p.laplacian_spectral() : 0.0);
  const double v_block = spectral_norm(matmul_at_b(x_bar.u, x_bar.u), kTol, kMaxIter, rng).value;
  return std::max(u_block, v_block);
}

StepSize step_size(const ProblemSpec& p, const FactorPair& x_bar, double eta_prev, const SolverConfig& cfg, Prng& rng) {
  StepSize out;
  out.lipschitz = block_lipschitz(p, x_bar, rng);
  out.eta = std::min(eta_prev, 1.0 / std::max(out.lipschitz, 1e-12));
  if (out.eta < cfg.eta_floor) {
    out.eta = cfg.eta_floor;
    out.floor_hit = true;
  }
  return out;
}

double lyapunov_gamma(const VarianceConstants& c) { return std::sqrt(2.0 * (c.v_gamma / c.tau + c.v1)); }

double lyapunov(double eta, double objective_next, double step_next, double step_prev, double gamma_next,
                const LyapunovConstants& c) {
  const double t = 1.0 - eta * c.alpha - eta * c.gamma - c.epsilon / 3.0;
  double value = eta * (objective_next - c.phi_lower_bound) + t * step_next +
                 eta * (c.gamma / 2.0 + c.epsilon / (3.0 * eta)) * step_prev;
  if (c.gamma > 0.0) value += eta * gamma_next / (2.0 * c.tau * c.gamma);
  return value;
}

double stationarity_witness(const ProblemSpec& p, const FactorPair& x_next, const FactorPair& x_bar,
                            const FactorPair& g, double eta, const KernelSpec& kernel) {
  FactorPair w = full_gradient(p, x_next);
  w -= g;
  axpy(1.0 / eta, kernel_gradient(kernel, x_bar), w);
  axpy(-1.0 / eta, kernel_gradient(kernel, x_next), w);
  return norm(w);
}

namespace {

VarianceConstants constants_for(const EstimatorState& est, const SolverConfig& cfg, double m1) {
  switch (est.kind()) {
    case EstimatorKind::SAGA: return saga_constants(est.samples(), est.batch_size(), m1);
    case EstimatorKind::SARAH: return sarah_constants(cfg.sarah_restart_probability, m1);
    default: return VarianceConstants{};
  }
}

}  // namespace

RunResult run(const ProblemSpec& p, const SolverConfig& cfg, const FactorPair& x0, const IterateObserver& observer) {
  cfg.validate();
  p.require_shape(x0);
  if (!all_finite(x0)) throw std::invalid_argument("run: x0 has non-finite entries");
  if (p.kind() != ProblemKind::WCMF) {
    auto negative = [](const DenseMatrix& a) {
      for (double v : a.data())
        if (v < -kFeasibilityTolerance) return true;
      return false;
    };
    if (negative(x0.u) || negative(x0.v)) throw std::invalid_argument("run: x0 must be nonnegative");
  }

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed_ms = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - start).count(); };

  RunResult result;
  result.x_final = x0;
  {
    const ObjectiveValue obj = objective(p, x0);
    result.initial.objective = obj.value;
    result.initial.feasible = obj.feasible;
    result.initial.eta = cfg.eta0;
  }
  if (cfg.max_epochs == 0) return result;

  const EstimatorKind est_kind = cfg.effective_estimator();
  EstimatorOptions est_options;
  est_options.kind = est_kind;
  est_options.batch_size = cfg.batch_size;
  est_options.restart_probability = cfg.sarah_restart_probability;
  EstimatorState estimator(est_options, Prng::stream(cfg.seed, 0x45535449ULL));
  estimator.initialize(p, x0);
  Prng power_rng = Prng::stream(cfg.seed, 0x504F5745ULL);

  const double l_under = cfg.l_under_mode == LowerSmoothnessMode::Zero ? 0.0 : cfg.l_bar;
  const bool deterministic = est_kind == EstimatorKind::Full;
  const bool audit_on = cfg.audit_every > 0;
  const std::size_t steps = estimator.steps_per_epoch();

  FactorPair x_prev = x0;
  FactorPair x = x0;
  double eta_prev = cfg.eta0;
  double step_cur = 0.0;      // D(x_{k-1}, x_k)
  double move_sq_cur = 0.0;   // ||x_k - x_{k-1}||^2
  double move_sq_prev = 0.0;  // ||x_{k-1} - x_{k-2}||^2
  double last_lipschitz = 0.0;
  std::size_t k = 0;
  std::size_t stall = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    IterationTrace trace;
    trace.epoch = epoch;
    double step_sum = 0.0;
    double beta_sum = 0.0;
    double step_before_last = 0.0;
    FactorPair last_x_bar;
    FactorPair last_g;
    KernelSpec last_kernel;
    double last_eta = eta_prev;
    std::optional<VarianceAudit> last_audit;

    for (std::size_t inner = 0; inner < steps; ++inner, ++k) {
      const KernelSpec kernel_prev = prescribed_kernel(p, eta_prev);
      Extrapolation ext = extrapolate(x, x_prev, k, cfg, kernel_prev, eta_prev, l_under);
      FactorPair g = estimator.estimate(p, ext.x_bar);

      StepSize ss = step_size(p, ext.x_bar, eta_prev, cfg, power_rng);
      last_lipschitz = ss.lipschitz;
      double eta = ss.eta;
      const double m1 = cfg.lipschitz_m1 > 0.0 ? cfg.lipschitz_m1 : ss.lipschitz;
      if (cfg.strict_theory_stepsize) {
        eta = std::min(eta, 1.0 / cfg.l_bar);
        const double denom = p.weak_convexity() + 2.0 * lyapunov_gamma(constants_for(estimator, cfg, m1));
        if (denom > 0.0) eta = std::min(eta, (1.0 - cfg.delta) / denom);
        if (eta < cfg.eta_floor) {
          eta = cfg.eta_floor;
          ss.floor_hit = true;
        }
      }
      if (ss.floor_hit) {
        trace.eta_floor_hit = true;
        result.eta_floor_hit = true;
      }

      const KernelSpec kernel = prescribed_kernel(p, eta);
      FactorPair x_next = prox_step(p, kernel, g, ext.x_bar, eta);
      if (!all_finite(x_next)) {
        result.status = RunStatus::NumericalFailure;
        result.message = "non-finite iterate at iteration " + std::to_string(k);
        result.iterations = k;
        result.x_final = x;
        return result;
      }
      if (!is_feasible(p, x_next)) result.feasibility_maintained = false;

      const double step_next = bregman_distance(kernel, x, x_next);
      if (audit_on && (k % cfg.audit_every == 0 || inner + 1 == steps)) {
        AuditRecord rec;
        rec.iteration = k;
        rec.variance = estimator.audit(p, ext.x_bar, g);
        rec.step_sq = move_sq_cur;
        rec.prev_step_sq = move_sq_prev;
        result.audits.push_back(rec);
        if (inner + 1 == steps) last_audit = rec.variance;
      }
      if (observer) observer(k, x_next);

      step_sum += step_next;
      beta_sum += ext.beta;
      step_before_last = step_cur;
      move_sq_prev = move_sq_cur;
      move_sq_cur = squared_norm(x_next - x);
      step_cur = step_next;
      x_prev = std::move(x);
      x = std::move(x_next);
      eta_prev = eta;
      last_eta = eta;
      last_x_bar = std::move(ext.x_bar);
      last_g = std::move(g);
      last_kernel = kernel;
    }

    const ObjectiveValue obj = objective(p, x);
    trace.objective = obj.value;
    trace.feasible = obj.feasible;
    trace.bregman_step = step_sum / static_cast<double>(steps);
    trace.beta = beta_sum / static_cast<double>(steps);
    trace.eta = last_eta;
    if (!std::isfinite(obj.value)) {
      result.status = RunStatus::NumericalFailure;
      result.message = "non-finite objective at epoch " + std::to_string(epoch);
      result.traces.push_back(trace);
      result.iterations = k;
      result.x_final = x;
      return result;
    }

    if (deterministic || last_audit) {
      LyapunovConstants lc;
      lc.alpha = p.weak_convexity();
      lc.epsilon = cfg.epsilon;
      lc.phi_lower_bound = cfg.phi_lower_bound;
      double gamma_next = 0.0;
      if (!deterministic && last_audit->tracked) {
        const double m1 = cfg.lipschitz_m1 > 0.0 ? cfg.lipschitz_m1 : last_lipschitz;
        const VarianceConstants vc = constants_for(estimator, cfg, m1);
        lc.gamma = lyapunov_gamma(vc);
        lc.tau = vc.tau;
        gamma_next = last_audit->gamma;
      }
      if (deterministic || last_audit->tracked)
        trace.lyapunov = lyapunov(last_eta, obj.value, step_cur, step_before_last, gamma_next, lc);
      if (last_audit) trace.gamma_audit = last_audit->gamma;
      trace.stationarity = stationarity_witness(p, x, last_x_bar, last_g, last_eta, last_kernel);
    }
    trace.wall_ms = elapsed_ms();
    result.traces.push_back(trace);

    stall = trace.bregman_step < cfg.stop_tolerance ? stall + 1 : 0;
    if (stall >= cfg.stop_patience) {
      result.stopped_early = true;
      break;
    }
  }
  result.iterations = k;
  result.x_final = std::move(x);
  return result;
}

RateReport rate_check(const std::vector<std::vector<IterationTrace>>& runs, double epsilon) {
  RateReport report;
  if (runs.empty()) return report;
  std::size_t length = runs.front().size();
  for (const auto& r : runs) length = std::min(length, r.size());
  if (length == 0) return report;

  const double seeds = static_cast<double>(runs.size());
  double psi1 = 0.0;
  for (const auto& r : runs) psi1 += r.front().lyapunov.value_or(0.0);
  psi1 /= seeds;

  double running_min = std::numeric_limits<double>::infinity();
  for (std::size_t K = 1; K <= length; ++K) {
    double mean_step = 0.0;
    for (const auto& r : runs) mean_step += r[K - 1].bregman_step;
    mean_step /= seeds;
    running_min = std::min(running_min, mean_step);
    const double bound = 1.1 * 3.0 * psi1 / (epsilon * static_cast<double>(K));
    ++report.checked;
    if (running_min > bound) {
      ++report.failures;
      if (!report.first_failure) report.first_failure = K;
    }
  }
  report.passed = report.failures == 0;
  return report;
}

}  // namespace bregopt
