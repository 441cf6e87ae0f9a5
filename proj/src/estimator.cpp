#include "bregopt/estimator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bregopt {

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Full: return "full";
    case EstimatorKind::SGD: return "sgd";
    case EstimatorKind::SAGA: return "saga";
    case EstimatorKind::SARAH: return "sarah";
  }
  return "unknown";
}

EstimatorKind parse_estimator_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "full") return EstimatorKind::Full;
  if (lower == "sgd") return EstimatorKind::SGD;
  if (lower == "saga") return EstimatorKind::SAGA;
  if (lower == "sarah") return EstimatorKind::SARAH;
  throw std::invalid_argument("unknown estimator: " + std::string(name));
}

VarianceConstants saga_constants(std::size_t n, std::size_t b, double m1) {
  const double nd = static_cast<double>(n);
  const double bd = static_cast<double>(b);
  VarianceConstants c;
  c.tau = bd / (2.0 * nd);
  c.v1 = m1 * m1;
  c.v2 = m1;
  c.v_gamma = (2.0 * bd + 4.0 * nd) * m1 * m1 / (bd * bd);
  return c;
}

VarianceConstants sarah_constants(double restart_probability, double m1) {
  VarianceConstants c;
  c.tau = restart_probability;
  c.v1 = 2.0 * m1 * m1;
  c.v_gamma = c.v1;
  c.v2 = 2.0 * m1;
  return c;
}

EstimatorState::EstimatorState(EstimatorOptions options, Prng rng) : options_(options), rng_(rng) {
  if (options_.kind == EstimatorKind::SARAH &&
      !(options_.restart_probability > 0.0 && options_.restart_probability <= 1.0)) {
    throw std::invalid_argument("SARAH restart probability must lie in (0, 1]");
  }
  if (options_.kind != EstimatorKind::Full && options_.batch_size == 0)
    throw std::invalid_argument("estimator: batch size must be positive");
}

std::size_t EstimatorState::steps_per_epoch() const noexcept {
  if (batch_ == 0) return 1;
  return (n_ + batch_ - 1) / batch_;
}

void EstimatorState::initialize(const ProblemSpec& p, const FactorPair& x0) {
  p.require_shape(x0);
  n_ = p.samples();
  batch_ = options_.kind == EstimatorKind::Full ? n_ : std::min(options_.batch_size, n_);
  sarah_prev_point_.reset();
  sarah_prev_estimate_.reset();
  if (options_.kind == EstimatorKind::SAGA) {
    saga_residual_ = DenseMatrix(n_, p.rows());
    saga_vcol_ = DenseMatrix(n_, p.rank());
    saga_utres_ = DenseMatrix(n_, p.rank());
    saga_avg_u_ = DenseMatrix(p.rows(), p.rank());
    for (std::size_t i = 0; i < n_; ++i) store_saga_sample(p, x0, i);
    for (std::size_t i = 0; i < n_; ++i) {
      auto res = saga_residual_.row(i);
      auto vc = saga_vcol_.row(i);
      for (std::size_t a = 0; a < res.size(); ++a)
        for (std::size_t k = 0; k < vc.size(); ++k) saga_avg_u_(a, k) += res[a] * vc[k];
    }
  }
  initialized_ = true;
}

void EstimatorState::store_saga_sample(const ProblemSpec& p, const FactorPair& x, std::size_t col) {
  const std::size_t m = p.rows();
  const std::size_t r = p.rank();
  auto res = saga_residual_.row(col);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < r; ++k) s += x.u(i, k) * x.v(k, col);
    res[i] = s - p.data()(i, col);
  }
  auto vc = saga_vcol_.row(col);
  auto ut = saga_utres_.row(col);
  for (std::size_t k = 0; k < r; ++k) {
    vc[k] = x.v(k, col);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += x.u(i, k) * res[i];
    ut[k] = s;
  }
}

FactorPair EstimatorState::estimate(const ProblemSpec& p, const FactorPair& x_bar) {
  if (!initialized_) throw std::logic_error("estimator: initialize() must be called before estimate()");
  p.require_shape(x_bar);
  switch (options_.kind) {
    case EstimatorKind::Full:
      last_full_ = true;
      last_batch_.clear();
      return full_gradient(p, x_bar);
    case EstimatorKind::SGD:
      last_full_ = batch_ == n_;
      last_batch_ = rng_.sample_without_replacement(n_, batch_);
      return sample_gradient(p, x_bar, last_batch_);
    case EstimatorKind::SAGA: return estimate_saga(p, x_bar);
    case EstimatorKind::SARAH: return estimate_sarah(p, x_bar);
  }
  throw std::logic_error("estimator: unknown kind");
}

FactorPair EstimatorState::estimate_saga(const ProblemSpec& p, const FactorPair& x_bar) {
  last_batch_ = rng_.sample_without_replacement(n_, batch_);
  const std::size_t m = p.rows();
  const std::size_t r = p.rank();

  if (batch_ == n_) {
    // every stored term cancels: the estimate is the exact full gradient
    last_full_ = true;
    FactorPair g = full_gradient(p, x_bar);
    saga_avg_u_ = DenseMatrix(m, r);
    for (std::size_t i = 0; i < n_; ++i) store_saga_sample(p, x_bar, i);
    for (std::size_t i = 0; i < n_; ++i) {
      auto res = saga_residual_.row(i);
      auto vc = saga_vcol_.row(i);
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t k = 0; k < r; ++k) saga_avg_u_(a, k) += res[a] * vc[k];
    }
    return g;
  }
  last_full_ = false;

  const double scale = static_cast<double>(n_) / static_cast<double>(batch_);
  // V block: column i holds U^T residual_i from the table; sampled columns are corrected
  DenseMatrix gv(r, n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t k = 0; k < r; ++k) gv(k, i) = saga_utres_(i, k);

  DenseMatrix delta_u(m, r);  // sum_j (new res v^T - old res v^T)
  for (std::size_t col : last_batch_) {
    std::vector<double> old_res(saga_residual_.row(col).begin(), saga_residual_.row(col).end());
    std::vector<double> old_v(saga_vcol_.row(col).begin(), saga_vcol_.row(col).end());
    std::vector<double> old_ut(saga_utres_.row(col).begin(), saga_utres_.row(col).end());
    store_saga_sample(p, x_bar, col);
    auto res = saga_residual_.row(col);
    auto vc = saga_vcol_.row(col);
    auto ut = saga_utres_.row(col);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t k = 0; k < r; ++k) delta_u(a, k) += res[a] * vc[k] - old_res[a] * old_v[k];
    for (std::size_t k = 0; k < r; ++k) gv(k, col) = old_ut[k] + scale * (ut[k] - old_ut[k]);
  }

  DenseMatrix gu = saga_avg_u_;
  axpy(scale, delta_u, gu);
  saga_avg_u_ += delta_u;
  if (p.kind() == ProblemKind::GNMF && p.mu0() != 0.0) axpy(p.mu0(), matmul(p.laplacian(), x_bar.u), gu);
  return FactorPair(std::move(gu), std::move(gv));
}

FactorPair EstimatorState::estimate_sarah(const ProblemSpec& p, const FactorPair& x_bar) {
  const bool restart = !sarah_prev_estimate_ || rng_.uniform() < options_.restart_probability;
  FactorPair g;
  if (restart) {
    last_full_ = true;
    last_batch_.clear();
    g = full_gradient(p, x_bar);
  } else {
    last_full_ = false;
    last_batch_ = rng_.sample_without_replacement(n_, batch_);
    g = *sarah_prev_estimate_;
    g += sample_gradient(p, x_bar, last_batch_);
    g -= sample_gradient(p, *sarah_prev_point_, last_batch_);
  }
  sarah_prev_point_ = x_bar;
  sarah_prev_estimate_ = g;
  return g;
}

double EstimatorState::saga_average_drift() const {
  if (options_.kind != EstimatorKind::SAGA || !initialized_) return 0.0;
  DenseMatrix recomputed(saga_avg_u_.rows(), saga_avg_u_.cols());
  for (std::size_t i = 0; i < n_; ++i) {
    auto res = saga_residual_.row(i);
    auto vc = saga_vcol_.row(i);
    for (std::size_t a = 0; a < res.size(); ++a)
      for (std::size_t k = 0; k < vc.size(); ++k) recomputed(a, k) += res[a] * vc[k];
  }
  return max_abs_diff(recomputed, saga_avg_u_);
}

VarianceAudit EstimatorState::audit(const ProblemSpec& p, const FactorPair& x_bar, const FactorPair& estimate) const {
  VarianceAudit out;
  const FactorPair exact = full_gradient(p, x_bar);
  out.realized_error = squared_norm(estimate - exact);
  switch (options_.kind) {
    case EstimatorKind::Full:
      return out;
    case EstimatorKind::SGD:
      out.tracked = false;
      return out;
    case EstimatorKind::SARAH:
      out.gamma = out.realized_error;
      out.upsilon = std::sqrt(out.realized_error);
      return out;
    case EstimatorKind::SAGA: break;
  }

  // Gamma_{k+1} = 1/(bn) sum_i ||grad f_i(x_bar) - g_i||^2 with g_i the stored gradient
  const std::size_t m = p.rows();
  const std::size_t r = p.rank();
  const double nd = static_cast<double>(n_);
  std::vector<double> res(m);
  double sum_sq = 0.0;
  double sum_norm = 0.0;
  for (std::size_t col = 0; col < n_; ++col) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += x_bar.u(i, k) * x_bar.v(k, col);
      res[i] = s - p.data()(i, col);
    }
    auto old_res = saga_residual_.row(col);
    auto old_v = saga_vcol_.row(col);
    auto old_ut = saga_utres_.row(col);
    double diff_sq = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < r; ++k) {
        const double d = res[i] * x_bar.v(k, col) - old_res[i] * old_v[k];
        diff_sq += d * d;
      }
    for (std::size_t k = 0; k < r; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += x_bar.u(i, k) * res[i];
      const double d = s - old_ut[k];
      diff_sq += d * d;
    }
    diff_sq *= nd * nd;
    sum_sq += diff_sq;
    sum_norm += std::sqrt(diff_sq);
  }
  const double bn = static_cast<double>(batch_) * nd;
  out.gamma = sum_sq / bn;
  out.upsilon = sum_norm / std::sqrt(bn);
  const double drift = saga_average_drift();
  out.table_consistent = drift <= 1e-10 * (1.0 + frobenius_norm(saga_avg_u_));
  return out;
}

DecayReport check_geometric_decay(const std::vector<std::vector<DecaySample>>& runs, double tau, double v_gamma) {
  DecayReport report;
  if (runs.empty()) return report;
  std::size_t length = runs.front().size();
  for (const auto& run : runs) length = std::min(length, run.size());
  const double seeds = static_cast<double>(runs.size());

  std::vector<double> excess(runs.size());
  for (std::size_t k = 0; k < length; ++k) {
    double mean = 0.0;
    double scale = 0.0;
    for (std::size_t s = 0; s < runs.size(); ++s) {
      const DecaySample& d = runs[s][k];
      const double bound = (1.0 - tau) * d.gamma + v_gamma * (d.step_sq + d.prev_step_sq);
      excess[s] = d.gamma_next - bound;
      mean += excess[s];
      scale = std::max(scale, std::abs(d.gamma_next) + std::abs(bound));
    }
    mean /= seeds;
    double var = 0.0;
    for (double e : excess) var += (e - mean) * (e - mean);
    const double se = runs.size() > 1 ? std::sqrt(var / (seeds - 1.0) / seeds) : 0.0;
    ++report.iterations;
    if (mean > 2.0 * se + 1e-14 * scale) ++report.violations;
  }
  report.violation_fraction =
      report.iterations == 0 ? 0.0 : static_cast<double>(report.violations) / static_cast<double>(report.iterations);
  report.passed = report.violation_fraction <= 0.05;
  return report;
}

}  // namespace bregopt
