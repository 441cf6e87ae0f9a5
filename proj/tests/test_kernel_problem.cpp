#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bregopt/kernel.hpp"
#include "bregopt/numeric.hpp"
#include "bregopt/problem.hpp"
#include "oracles.hpp"

using namespace bregopt;

namespace {

FactorPair pair_1x1(double u, double v) { return FactorPair{DenseMatrix{{u}}, DenseMatrix{{v}}}; }

ProblemSpec small_gnmf(Prng& rng, std::size_t m = 4, std::size_t r = 2, std::size_t d = 5, double mu0 = 0.3) {
  return ProblemSpec::gnmf(oracle::random_matrix(m, d, rng), r, mu0, oracle::random_laplacian(m, rng));
}

}  // namespace

// ---- kernel ----------------------------------------------------------------

TEST(Kernel, ValueExamples) {
  // s = 1: a/4 + b/2
  EXPECT_DOUBLE_EQ(kernel_value(KernelSpec(1, 0), pair_1x1(1, 0)), 0.25);
  EXPECT_DOUBLE_EQ(kernel_value(KernelSpec(3, 1), pair_1x1(1, 0)), 1.25);
  // s = 2: a + b
  EXPECT_DOUBLE_EQ(kernel_value(KernelSpec(0, 1), pair_1x1(1, 1)), 1.0);
  // s = 6 with ||U||^2 = 2: 9a + 3b + c
  const FactorPair x{DenseMatrix{{1, 1}}, DenseMatrix{{1, 1}, {1, 1}}};
  EXPECT_DOUBLE_EQ(kernel_value(KernelSpec(1, 0), x), 9.0);
  EXPECT_DOUBLE_EQ(kernel_value(KernelSpec(1, 1, 1), x), 9.0 + 3.0 + 1.0);
}

TEST(Kernel, GradientExamples) {
  // grad = (a s + b) x + c (U, 0)
  const KernelSpec k(3, 2, 0.5);
  const FactorPair x = pair_1x1(1, 2);  // s = 5
  const FactorPair g = kernel_gradient(k, x);
  EXPECT_DOUBLE_EQ(g.u(0, 0), (3 * 5 + 2) * 1 + 0.5 * 1);
  EXPECT_DOUBLE_EQ(g.v(0, 0), (3 * 5 + 2) * 2);
}

TEST(Kernel, GradientMatchesFiniteDifferences) {
  Prng rng(31);
  for (int t = 0; t < 20; ++t) {
    const KernelSpec k(rng.uniform(0, 3), rng.uniform(0.1, 2), rng.uniform(0, 1));
    const FactorPair x = oracle::random_pair(3, 2, 4, rng, -1, 1);
    const FactorPair fd = oracle::fd_gradient([&](const FactorPair& y) { return kernel_value(k, y); }, x, 1e-6);
    ASSERT_LT(oracle::max_rel_diff(kernel_gradient(k, x), fd), 1e-7);
  }
}

TEST(Kernel, RejectsBadCoefficients) {
  EXPECT_THROW(KernelSpec(-1, 1), std::invalid_argument);
  EXPECT_THROW(KernelSpec(0, 0, 0), std::invalid_argument);
  EXPECT_THROW(KernelSpec(1, std::nan("")), std::invalid_argument);
  EXPECT_TRUE(KernelSpec(1, 0).lacks_strong_convexity());
  EXPECT_FALSE(KernelSpec(1, 1).lacks_strong_convexity());
}

TEST(Bregman, Examples) {
  // psi = s/2 (a = 0, b = 1): D = ||x - y||^2 / 2
  EXPECT_DOUBLE_EQ(bregman_distance(KernelSpec(0, 1), pair_1x1(1, 0), pair_1x1(0, 0)), 0.5);
  // psi = s^2/4 (a = 1): D(x, 0) = psi(x)
  EXPECT_DOUBLE_EQ(bregman_distance(KernelSpec(1, 0), pair_1x1(1, 1), pair_1x1(0, 0)), 1.0);
  EXPECT_THROW(bregman_distance(KernelSpec(1, 1), pair_1x1(1, 1), FactorPair::zeros(2, 1, 1)), std::invalid_argument);
}

TEST(Bregman, NonnegativeStronglyConvexAndZeroOnlyAtEquality) {
  Prng rng(33);
  for (int t = 0; t < 500; ++t) {
    const KernelSpec k(rng.uniform(0, 3), rng.uniform(0.1, 2), rng.uniform(0, 1));
    const FactorPair x = oracle::random_pair(3, 2, 3, rng, -1, 1);
    const FactorPair y = oracle::random_pair(3, 2, 3, rng, -1, 1);
    const double d = bregman_distance(k, x, y);
    ASSERT_GE(d, 0.5 * k.quadratic * squared_norm(x - y) * (1 - 1e-12));
    ASSERT_GT(d, 0.0);
    ASSERT_EQ(bregman_distance(k, x, x), 0.0);
  }
}

TEST(Bregman, ThreePointIdentity) {
  Prng rng(35);
  for (int t = 0; t < 200; ++t) {
    const KernelSpec k(rng.uniform(0, 3), rng.uniform(0.1, 2), rng.uniform(0, 1));
    const FactorPair x = oracle::random_pair(2, 2, 3, rng, -1, 1);
    const FactorPair y = oracle::random_pair(2, 2, 3, rng, -1, 1);
    const FactorPair z = oracle::random_pair(2, 2, 3, rng, -1, 1);
    const double lhs = bregman_distance(k, x, z) - bregman_distance(k, x, y) - bregman_distance(k, y, z);
    const double rhs = dot(kernel_gradient(k, y) - kernel_gradient(k, z), x - y);
    ASSERT_NEAR(lhs, rhs, 1e-10 * (1 + std::abs(rhs)));
  }
}

TEST(SmoothAdaptable, KernelAgainstItselfAndLinearFunction) {
  Prng rng(37);
  const KernelSpec k(3, 1);
  const FactorPair shape = FactorPair::zeros(3, 2, 3);
  ObjectiveCallback psi = [&](const FactorPair& x) { return ValueGradient{kernel_value(k, x), kernel_gradient(k, x)}; };
  EXPECT_TRUE(check_smooth_adaptable(psi, k, 1.0, 1.0, 500, shape, rng).passed);
  // psi is 1-smooth relative to itself but not 0.5-smooth
  EXPECT_FALSE(check_smooth_adaptable(psi, k, 0.5, 1.0, 500, shape, rng).passed);

  const FactorPair c = oracle::random_pair(3, 2, 3, rng, -1, 1);
  ObjectiveCallback lin = [&](const FactorPair& x) { return ValueGradient{dot(c, x), c}; };
  const auto rep = check_smooth_adaptable(lin, k, 0.0, 0.0, 500, shape, rng);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.upper_violations + rep.lower_violations, 0u);
}

TEST(SmoothAdaptable, PrescribedKernelsOnEveryModel) {
  Prng rng(39);
  const DenseMatrix m = oracle::random_matrix(4, 5, rng);
  const std::vector<ProblemSpec> problems{ProblemSpec::gnmf(m, 2, 0.5, oracle::random_laplacian(4, rng)),
                                          ProblemSpec::wcmf(m, 2, 0.2, 0.05), ProblemSpec::ssnmf(m, 2, 2, 1)};
  for (const auto& p : problems) {
    const KernelSpec k = prescribed_kernel(p, 0.5);
    ObjectiveCallback f = [&](const FactorPair& x) { return ValueGradient{smooth_value(p, x), full_gradient(p, x)}; };
    const auto rep = check_smooth_adaptable(f, k, 1.0, 1.0, 1000, FactorPair::zeros(4, 2, 5), rng, -2.0, 2.0);
    EXPECT_TRUE(rep.passed) << to_string(p.kind());
  }
}

// ---- problem ---------------------------------------------------------------

TEST(Problem, ObjectiveExamples) {
  // 1x1, M = 1, U = V = 0: 1/2
  const auto p = ProblemSpec::ssnmf(DenseMatrix{{1}}, 1, 1, 1);
  EXPECT_DOUBLE_EQ(objective(p, pair_1x1(0, 0)).value, 0.5);
  // M = [[1, 2]], U = 1, V = [1, 1]: 1/2 (0 + 1)
  const auto q = ProblemSpec::wcmf(DenseMatrix{{1, 2}}, 1, 0.25, 0.0);
  const FactorPair x{DenseMatrix{{1}}, DenseMatrix{{1, 1}}};
  EXPECT_DOUBLE_EQ(objective(q, x).value, 0.5 + 0.25);
}

TEST(Problem, SmoothValueMatchesReference) {
  Prng rng(41);
  for (int t = 0; t < 20; ++t) {
    const auto p = small_gnmf(rng);
    const FactorPair x = oracle::random_pair(4, 2, 5, rng);
    const double ref = oracle::smooth_reference(p.data(), x, p.mu0(), &p.laplacian());
    ASSERT_NEAR(smooth_value(p, x), ref, 1e-12 * (1 + ref));
  }
}

TEST(Problem, InfeasiblePointsAreFlagged) {
  const auto s = ProblemSpec::ssnmf(DenseMatrix{{1, 1}, {1, 1}}, 1, 1, 1);
  const FactorPair dense{DenseMatrix{{1}, {1}}, DenseMatrix{{1, 1}}};
  EXPECT_FALSE(objective(s, dense).feasible);
  const FactorPair sparse{DenseMatrix{{1}, {0}}, DenseMatrix{{0, 1}}};
  EXPECT_TRUE(objective(s, sparse).feasible);
  const FactorPair neg{DenseMatrix{{-1}, {0}}, DenseMatrix{{0, 1}}};
  EXPECT_FALSE(objective(s, neg).feasible);
  const auto w = ProblemSpec::wcmf(DenseMatrix{{1}}, 1, 0.1, 0.01);
  EXPECT_TRUE(objective(w, pair_1x1(-3, -3)).feasible);
}

TEST(Problem, GradientExampleAndFiniteDifferences) {
  // f = 1/2 (1 - u v)^2 at (1, 2): grad = (-(1-2)*2, -(1-2)*1) = (2, 1)
  const auto p = ProblemSpec::ssnmf(DenseMatrix{{1}}, 1, 1, 1);
  const FactorPair g = full_gradient(p, pair_1x1(1, 2));
  EXPECT_DOUBLE_EQ(g.u(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g.v(0, 0), 1.0);

  Prng rng(43);
  for (int t = 0; t < 10; ++t) {
    const auto q = small_gnmf(rng);
    const FactorPair x = oracle::random_pair(4, 2, 5, rng);
    const FactorPair fd = oracle::fd_gradient(
        [&](const FactorPair& y) { return oracle::smooth_reference(q.data(), y, q.mu0(), &q.laplacian()); }, x, 1e-6);
    ASSERT_LT(oracle::max_rel_diff(full_gradient(q, x), fd), 1e-7);
  }
}

TEST(Problem, SampleGradientsAverageToFullGradient) {
  Prng rng(45);
  const auto p = small_gnmf(rng, 3, 2, 5);
  const FactorPair x = oracle::random_pair(3, 2, 5, rng);
  // singletons
  FactorPair sum = FactorPair::zeros(3, 2, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t idx[1] = {i};
    const FactorPair gi = sample_gradient(p, x, idx);
    // only column i of the V block is touched
    for (std::size_t j = 0; j < 5; ++j) {
      if (j == i) continue;
      for (std::size_t k = 0; k < 2; ++k) ASSERT_EQ(gi.v(k, j), 0.0);
    }
    sum += gi;
  }
  EXPECT_LT(max_abs_diff((1.0 / 5) * sum, full_gradient(p, x)), 1e-12);
  // every 3-subset
  FactorPair sum3 = FactorPair::zeros(3, 2, 5);
  int count = 0;
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = a + 1; b < 5; ++b)
      for (std::size_t c = b + 1; c < 5; ++c) {
        const std::size_t idx[3] = {a, b, c};
        sum3 += sample_gradient(p, x, idx);
        ++count;
      }
  EXPECT_LT(max_abs_diff((1.0 / count) * sum3, full_gradient(p, x)), 1e-12);

  const std::size_t all[5] = {0, 1, 2, 3, 4};
  EXPECT_LT(max_abs_diff(sample_gradient(p, x, all), full_gradient(p, x)), 1e-12);
}

TEST(Problem, SampleGradientRejectsBadBatches) {
  Prng rng(47);
  const auto p = small_gnmf(rng);
  const FactorPair x = oracle::random_pair(4, 2, 5, rng);
  const std::size_t repeated[2] = {1, 1};
  const std::size_t out_of_range[1] = {5};
  EXPECT_THROW(sample_gradient(p, x, std::span<const std::size_t>{}), std::invalid_argument);
  EXPECT_THROW(sample_gradient(p, x, repeated), std::invalid_argument);
  EXPECT_THROW(sample_gradient(p, x, out_of_range), std::invalid_argument);
}

TEST(Problem, PrescribedKernels) {
  Prng rng(49);
  const DenseMatrix m = oracle::random_matrix(4, 5, rng);
  const DenseMatrix lap = oracle::random_laplacian(4, rng);
  const auto g = prescribed_kernel(ProblemSpec::gnmf(m, 2, 0.5, lap), 0.3);
  EXPECT_EQ(g.quartic, 3.0);
  EXPECT_NEAR(g.quadratic, frobenius_norm(m) + 0.5 * frobenius_norm(lap), 1e-12);
  EXPECT_EQ(g.u_quadratic, 0.0);
  const auto w = prescribed_kernel(ProblemSpec::wcmf(m, 2, 0.2, 0.05), 0.3);
  EXPECT_NEAR(w.quadratic, frobenius_norm(m), 1e-12);
  EXPECT_NEAR(w.u_quadratic, 0.3 * 0.05, 1e-15);
  const auto s = prescribed_kernel(ProblemSpec::ssnmf(m, 2, 1, 1), 0.3);
  EXPECT_NEAR(s.quadratic, frobenius_norm(m), 1e-12);
  EXPECT_EQ(s.u_quadratic, 0.0);
}

TEST(Problem, ValidationErrors) {
  EXPECT_THROW(ProblemSpec::gnmf(DenseMatrix{{1, 1}}, 1, 0.1, DenseMatrix{{1}}), std::invalid_argument);
  EXPECT_THROW(ProblemSpec::gnmf(DenseMatrix{{1, 1}}, 0, 0.1, DenseMatrix{{0}}), std::invalid_argument);
  EXPECT_THROW(ProblemSpec::gnmf(DenseMatrix{{1, 1}, {1, 1}}, 1, 0.1, DenseMatrix{{0}}), std::invalid_argument);
  EXPECT_THROW(ProblemSpec::gnmf(DenseMatrix{{1, 1}}, 1, -0.1, DenseMatrix{{0}}), std::invalid_argument);
  EXPECT_THROW(ProblemSpec::ssnmf(DenseMatrix{{1, 1}}, 1, 0, 1), std::invalid_argument);
  EXPECT_THROW(ProblemSpec::wcmf(DenseMatrix{{1, 1}}, 1, -1.0, 0.0), std::invalid_argument);
  // lambda1 <= lambda2 is allowed with a warning
  const auto w = ProblemSpec::wcmf(DenseMatrix{{1, 1}}, 1, 0.01, 0.1);
  EXPECT_FALSE(w.warnings().empty());
}

// ---- prox ------------------------------------------------------------------

TEST(Prox, ScalarExampleAgainstGridSearch) {
  // 1x1 WCMF with lambda = 0, kernel (3, 1): x = t * (-P, -Q), 6 t^3 + t - 1 = 0 for P = Q = -1
  const auto p = ProblemSpec::wcmf(DenseMatrix{{1}}, 1, 0.0, 0.0);
  const KernelSpec k = prescribed_kernel(p, 1.0);
  ASSERT_EQ(k.quadratic, 1.0);
  // choose g so that P = eta g - grad psi(x_bar) = -1 with x_bar = 0
  const FactorPair g = pair_1x1(-1, -1);
  const FactorPair x = prox_step(p, k, g, pair_1x1(0, 0), 1.0);
  EXPECT_NEAR(x.u(0, 0), oracle::bisect_cubic(6.0, 1.0), 1e-12);
  EXPECT_NEAR(x.u(0, 0), 0.451, 1e-3);
  EXPECT_NEAR(x.v(0, 0), x.u(0, 0), 1e-15);

  double best = std::numeric_limits<double>::infinity();
  double best_u = 0, best_v = 0;
  for (int i = 0; i <= 400; ++i)
    for (int j = 0; j <= 400; ++j) {
      const double u = i * 0.0025, v = j * 0.0025;
      const double val = prox_subproblem_value(p, k, g, pair_1x1(0, 0), 1.0, pair_1x1(u, v));
      if (val < best) best = val, best_u = u, best_v = v;
    }
  EXPECT_NEAR(best_u, x.u(0, 0), 0.0025);
  EXPECT_NEAR(best_v, x.v(0, 0), 0.0025);
  EXPECT_LE(prox_subproblem_value(p, k, g, pair_1x1(0, 0), 1.0, x), best + 1e-12);
}

TEST(Prox, ZeroDirectionGivesZero) {
  // GNMF: P, Q >= 0 projects to (A, B) = 0
  const auto p = ProblemSpec::gnmf(DenseMatrix{{1}}, 1, 0.0, DenseMatrix{{0}});
  const KernelSpec k = prescribed_kernel(p, 1.0);
  const FactorPair x = prox_step(p, k, pair_1x1(5, 5), pair_1x1(0, 0), 1.0);
  EXPECT_EQ(x.u(0, 0), 0.0);
  EXPECT_EQ(x.v(0, 0), 0.0);
}

TEST(Prox, SparseModelKeepsLargestEntries) {
  // SSNMF with s1 = 2 on a 3x1 U block: -P = [3, 0, 2] after projection of [3, -1, 2]
  const auto p = ProblemSpec::ssnmf(DenseMatrix{{1}, {1}, {1}}, 1, 2, 1);
  const KernelSpec k = prescribed_kernel(p, 1.0);
  const FactorPair g{DenseMatrix{{-3}, {1}, {-2}}, DenseMatrix{{-1}}};
  const FactorPair x = prox_step(p, k, g, FactorPair::zeros(3, 1, 1), 1.0);
  EXPECT_GT(x.u(0, 0), 0.0);
  EXPECT_EQ(x.u(1, 0), 0.0);
  EXPECT_GT(x.u(2, 0), 0.0);
  EXPECT_NEAR(x.u(0, 0) / x.u(2, 0), 1.5, 1e-12);
  // t solves 3 (9 + 4 + 1) t^3 + b t - 1 = 0
  EXPECT_NEAR(x.u(0, 0) / 3.0, oracle::bisect_cubic(42.0, k.quadratic), 1e-12);
}

TEST(Prox, RejectsForeignKernel) {
  const auto p = ProblemSpec::ssnmf(DenseMatrix{{1}}, 1, 1, 1);
  EXPECT_THROW(prox_step(p, KernelSpec(1, 1), pair_1x1(0, 0), pair_1x1(0, 0), 1.0), std::invalid_argument);
}

TEST(Prox, BeatsRandomFeasibleCandidatesAndStaysFeasible) {
  Prng rng(51);
  for (int inst = 0; inst < 6; ++inst) {
    const DenseMatrix m = oracle::random_matrix(3, 3, rng);
    const std::vector<ProblemSpec> problems{ProblemSpec::gnmf(m, 2, 0.4, oracle::random_laplacian(3, rng)),
                                            ProblemSpec::wcmf(m, 2, 0.3, 0.1), ProblemSpec::ssnmf(m, 2, 1, 1)};
    for (const auto& p : problems) {
      const double eta = rng.uniform(0.05, 1.0);
      const KernelSpec k = prescribed_kernel(p, eta);
      FactorPair x_bar = oracle::random_pair(3, 2, 3, rng);
      if (p.kind() == ProblemKind::SSNMF) {
        x_bar.u = hard_threshold_columns(x_bar.u, 1);
        x_bar.v = hard_threshold_rows(x_bar.v, 1);
      }
      const FactorPair g = oracle::random_pair(3, 2, 3, rng, -1, 1);
      const FactorPair x = prox_step(p, k, g, x_bar, eta);
      ASSERT_TRUE(is_feasible(p, x));
      const double val = prox_subproblem_value(p, k, g, x_bar, eta, x);
      for (int c = 0; c < 10000; ++c) {
        FactorPair cand = oracle::random_pair(3, 2, 3, rng, -0.5, 1.5);
        if (p.kind() != ProblemKind::WCMF) {
          cand.u = project_nonneg(cand.u);
          cand.v = project_nonneg(cand.v);
        }
        if (p.kind() == ProblemKind::SSNMF) {
          cand.u = hard_threshold_columns(cand.u, 1);
          cand.v = hard_threshold_rows(cand.v, 1);
        }
        ASSERT_LE(val, prox_subproblem_value(p, k, g, x_bar, eta, cand) + 1e-10) << to_string(p.kind());
      }
    }
  }
}

// ---- Laplacian -------------------------------------------------------------

TEST(Laplacian, TwoIdenticalRows) {
  LaplacianOptions o;
  o.neighbors = 1;
  EXPECT_EQ(build_knn_laplacian(DenseMatrix{{1, 2}, {1, 2}}, o), (DenseMatrix{{1, -1}, {-1, 1}}));
}

TEST(Laplacian, BruteForceFourPoints) {
  // points on a line at 0, 1, 3, 7; 1-NN: 0->1, 1->0, 3->1, 7->3
  LaplacianOptions o;
  o.neighbors = 1;
  const DenseMatrix pts{{0}, {1}, {3}, {7}};
  DenseMatrix w(4, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < 4; ++j)
      if (j != i && std::abs(pts(j, 0) - pts(i, 0)) < std::abs(pts(best, 0) - pts(i, 0))) best = j;
    w(i, best) = w(best, i) = 1.0;
  }
  DenseMatrix expect(4, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    double deg = 0;
    for (std::size_t j = 0; j < 4; ++j) deg += w(i, j), expect(i, j) = -w(i, j);
    expect(i, i) = deg;
  }
  EXPECT_EQ(build_knn_laplacian(pts, o), expect);
}

TEST(Laplacian, SymmetricZeroRowSumsPsd) {
  Prng rng(53);
  for (auto weighting : {EdgeWeighting::Binary, EdgeWeighting::Heat}) {
    LaplacianOptions o;
    o.neighbors = 3;
    o.weighting = weighting;
    const DenseMatrix l = build_knn_laplacian(oracle::random_matrix(10, 4, rng), o);
    EXPECT_TRUE(is_symmetric(l));
    for (std::size_t i = 0; i < 10; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 10; ++j) s += l(i, j);
      EXPECT_NEAR(s, 0.0, 1e-12);
    }
    for (double e : oracle::jacobi_eigenvalues(l)) EXPECT_GE(e, -1e-10);
  }
  LaplacianOptions bad;
  bad.neighbors = 2;
  EXPECT_THROW(build_knn_laplacian(DenseMatrix{{1}, {2}}, bad), std::invalid_argument);
}
