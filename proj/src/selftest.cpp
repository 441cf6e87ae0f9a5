#include "bregopt/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "bregopt/clustering.hpp"
#include "bregopt/estimator.hpp"
#include "bregopt/numeric.hpp"
#include "bregopt/problem.hpp"
#include "bregopt/synthetic.hpp"

namespace bregopt {

namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

double bisect_cubic(double a, double b) {
  double lo = 0.0, hi = 1.0 / b;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (a * mid * mid * mid + b * mid - 1.0 > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

SelftestCheck check_cubic(Prng& rng) {
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform(0.0, 100.0);
    const double b = rng.uniform(1e-3, 100.0);
    const double t = cubic_root(a, b);
    const double ref = bisect_cubic(a, b);
    worst = std::max(worst, std::abs(t - ref) / ref);
  }
  return {"cubic_root vs bisection", worst <= 1e-11, fmt("max rel err %.3g", worst)};
}

SelftestCheck check_hard_threshold(Prng& rng) {
  bool ok = true;
  for (int trial = 0; trial < 200 && ok; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const std::size_t s = 1 + rng.below(n);
    std::vector<double> y(n);
    for (double& v : y) v = rng.uniform(-1.0, 1.0);
    const auto z = hard_threshold(y, s);
    double kept = 0.0;
    for (double v : z) kept += v * v;
    double best = 0.0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) > s) continue;
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) sum += y[i] * y[i];
      best = std::max(best, sum);
    }
    ok = std::abs(kept - best) <= 1e-14;
  }
  return {"hard_threshold vs subset enumeration", ok, ""};
}

ProblemSpec random_problem(ProblemKind kind, std::size_t m, std::size_t r, std::size_t d, Prng& rng) {
  DenseMatrix data(m, d);
  for (double& v : data.data()) v = rng.uniform(0.0, 1.0);
  switch (kind) {
    case ProblemKind::GNMF: {
      LaplacianOptions lo;
      lo.neighbors = std::min<std::size_t>(1, m - 1);
      DenseMatrix lap = m > 1 ? build_knn_laplacian(data, lo) : DenseMatrix(1, 1);
      return ProblemSpec::gnmf(data, r, 0.3, lap);
    }
    case ProblemKind::WCMF: return ProblemSpec::wcmf(data, r, 0.2, 0.05);
    case ProblemKind::SSNMF: return ProblemSpec::ssnmf(data, r, 1, 1);
  }
  throw std::logic_error("random_problem");
}

FactorPair random_point(std::size_t m, std::size_t r, std::size_t d, Prng& rng, double lo, double hi) {
  FactorPair x = FactorPair::zeros(m, r, d);
  for (double& v : x.u.data()) v = rng.uniform(lo, hi);
  for (double& v : x.v.data()) v = rng.uniform(lo, hi);
  return x;
}

// Pushes a random point onto the feasible set of p.
FactorPair make_feasible(const ProblemSpec& p, FactorPair x) {
  if (p.kind() == ProblemKind::WCMF) return x;
  x.u = project_nonneg(x.u);
  x.v = project_nonneg(x.v);
  if (p.kind() == ProblemKind::SSNMF) {
    x.u = hard_threshold_columns(x.u, p.s1());
    x.v = hard_threshold_rows(x.v, p.s2());
  }
  return x;
}

SelftestCheck check_prox(Prng& rng) {
  double worst = 0.0;
  for (ProblemKind kind : {ProblemKind::GNMF, ProblemKind::WCMF, ProblemKind::SSNMF}) {
    for (int inst = 0; inst < 5; ++inst) {
      const ProblemSpec p = random_problem(kind, 3, 2, 3, rng);
      const double eta = rng.uniform(0.05, 1.0);
      const KernelSpec k = prescribed_kernel(p, eta);
      const FactorPair x_bar = make_feasible(p, random_point(3, 2, 3, rng, 0.0, 1.0));
      const FactorPair g = random_point(3, 2, 3, rng, -1.0, 1.0);
      const FactorPair x = prox_step(p, k, g, x_bar, eta);
      const double value = prox_subproblem_value(p, k, g, x_bar, eta, x);
      for (int c = 0; c < 2000; ++c) {
        FactorPair cand = c % 2 ? random_point(3, 2, 3, rng, -0.2, 1.5) : x;
        if (c % 2 == 0) axpy(1.0, random_point(3, 2, 3, rng, -0.05, 0.05), cand);
        cand = make_feasible(p, cand);
        worst = std::max(worst, value - prox_subproblem_value(p, k, g, x_bar, eta, cand));
      }
    }
  }
  return {"prox_step vs sampled candidates", worst <= 1e-8, fmt("max excess %.3g", worst)};
}

SelftestCheck check_gradients(Prng& rng) {
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const ProblemSpec p = random_problem(ProblemKind::GNMF, 4, 2, 3, rng);
    const KernelSpec k(3.0, rng.uniform(0.1, 2.0), rng.uniform(0.0, 1.0));
    const FactorPair x = random_point(4, 2, 3, rng, 0.0, 1.0);
    const FactorPair gf = full_gradient(p, x);
    const FactorPair gk = kernel_gradient(k, x);
    const double h = 1e-6;
    auto probe = [&](auto&& value, const FactorPair& grad) {
      for (int blk = 0; blk < 2; ++blk) {
        const std::size_t count = blk == 0 ? x.u.data().size() : x.v.data().size();
        for (std::size_t e = 0; e < count; ++e) {
          FactorPair hi = x, lo = x;
          (blk == 0 ? hi.u : hi.v).data()[e] += h;
          (blk == 0 ? lo.u : lo.v).data()[e] -= h;
          const double fd = (value(hi) - value(lo)) / (2 * h);
          const double an = (blk == 0 ? grad.u : grad.v).data()[e];
          worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
        }
      }
    };
    probe([&](const FactorPair& y) { return smooth_value(p, y); }, gf);
    probe([&](const FactorPair& y) { return kernel_value(k, y); }, gk);
  }
  return {"gradients vs central differences", worst <= 1e-6, fmt("max rel err %.3g", worst)};
}

SelftestCheck check_estimators(Prng& rng) {
  const ProblemSpec p = random_problem(ProblemKind::GNMF, 5, 2, 8, rng);
  double worst = 0.0;
  for (EstimatorKind kind : {EstimatorKind::SAGA, EstimatorKind::SARAH}) {
    EstimatorOptions opt;
    opt.kind = kind;
    opt.batch_size = kind == EstimatorKind::SAGA ? p.samples() : 2;
    opt.restart_probability = 1.0;
    EstimatorState est(opt, Prng(rng.next_u64()));
    FactorPair x = random_point(5, 2, 8, rng, 0.0, 1.0);
    est.initialize(p, x);
    for (int step = 0; step < 20; ++step) {
      x = random_point(5, 2, 8, rng, 0.0, 1.0);
      worst = std::max(worst, max_abs_diff(est.estimate(p, x), full_gradient(p, x)));
    }
  }
  return {"SAGA(b=n) and SARAH(p=1) equal full gradient", worst == 0.0, fmt("max diff %.3g", worst)};
}

SelftestCheck check_minibatch(Prng& rng) {
  const ProblemSpec p = random_problem(ProblemKind::GNMF, 4, 2, 6, rng);
  const FactorPair x = random_point(4, 2, 6, rng, 0.0, 1.0);
  FactorPair sum = FactorPair::zeros(4, 2, 6);
  double count = 0.0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) {
      const std::size_t batch[2] = {i, j};
      sum += sample_gradient(p, x, batch);
      count += 1.0;
    }
  const double err = max_abs_diff((1.0 / count) * sum, full_gradient(p, x));
  return {"minibatch average equals full gradient", err <= 1e-12, fmt("max diff %.3g", err)};
}

SelftestCheck check_accuracy(Prng& rng) {
  bool ok = true;
  for (int trial = 0; trial < 50 && ok; ++trial) {
    std::vector<std::size_t> truth(8), pred(8);
    for (auto& t : truth) t = rng.below(3);
    for (auto& t : pred) t = rng.below(3);
    std::vector<std::size_t> perm{0, 1, 2};
    double best = 0.0;
    do {
      double hit = 0.0;
      for (std::size_t i = 0; i < 8; ++i) hit += perm[pred[i]] == truth[i];
      best = std::max(best, hit / 8.0);
    } while (std::next_permutation(perm.begin(), perm.end()));
    ok = std::abs(clustering_accuracy(pred, truth) - best) < 1e-15;
  }
  return {"clustering accuracy vs permutation enumeration", ok, ""};
}

}  // namespace

std::vector<SelftestCheck> run_selftest(std::uint64_t seed) {
  Prng rng(seed);
  std::vector<SelftestCheck> out;
  out.push_back(check_cubic(rng));
  out.push_back(check_hard_threshold(rng));
  out.push_back(check_prox(rng));
  out.push_back(check_gradients(rng));
  out.push_back(check_estimators(rng));
  out.push_back(check_minibatch(rng));
  out.push_back(check_accuracy(rng));
  return out;
}

}  // namespace bregopt
