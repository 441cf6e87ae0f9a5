#include "bregopt/problem.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "bregopt/numeric.hpp"

namespace bregopt {

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::GNMF: return "gnmf";
    case ProblemKind::WCMF: return "wcmf";
    case ProblemKind::SSNMF: return "ssnmf";
  }
  return "unknown";
}

ProblemKind parse_problem_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "gnmf") return ProblemKind::GNMF;
  if (lower == "wcmf") return ProblemKind::WCMF;
  if (lower == "ssnmf") return ProblemKind::SSNMF;
  throw std::invalid_argument("unknown problem kind: " + std::string(name));
}

namespace {

void require_data(const DenseMatrix& m, std::size_t rank) {
  if (m.empty()) throw std::invalid_argument("problem: empty data matrix");
  if (rank == 0) throw std::invalid_argument("problem: rank must be positive");
}

}  // namespace

ProblemSpec ProblemSpec::gnmf(DenseMatrix m, std::size_t rank, double mu0, DenseMatrix laplacian) {
  require_data(m, rank);
  if (!(mu0 >= 0.0) || !std::isfinite(mu0)) throw std::invalid_argument("gnmf: mu0 must be finite and nonnegative");
  if (laplacian.rows() != m.rows() || laplacian.cols() != m.rows())
    throw std::invalid_argument("gnmf: Laplacian must be m x m");
  const double tol = 1e-10 * (1.0 + frobenius_norm(laplacian));
  if (!is_symmetric(laplacian, tol)) throw std::invalid_argument("gnmf: Laplacian must be symmetric");
  for (std::size_t i = 0; i < laplacian.rows(); ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < laplacian.cols(); ++j) {
      row_sum += laplacian(i, j);
      if (i != j && laplacian(i, j) > tol) throw std::invalid_argument("gnmf: Laplacian off-diagonals must be <= 0");
    }
    if (std::abs(row_sum) > tol) throw std::invalid_argument("gnmf: Laplacian rows must sum to zero");
  }
  ProblemSpec p;
  p.kind_ = ProblemKind::GNMF;
  p.m_ = std::move(m);
  p.laplacian_ = std::move(laplacian);
  p.rank_ = rank;
  p.mu0_ = mu0;
  p.cache_norms();
  return p;
}

ProblemSpec ProblemSpec::wcmf(DenseMatrix m, std::size_t rank, double lambda1, double lambda2) {
  require_data(m, rank);
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !std::isfinite(lambda1) || !std::isfinite(lambda2))
    throw std::invalid_argument("wcmf: lambda1, lambda2 must be finite and nonnegative");
  ProblemSpec p;
  p.kind_ = ProblemKind::WCMF;
  p.m_ = std::move(m);
  p.rank_ = rank;
  p.lambda1_ = lambda1;
  p.lambda2_ = lambda2;
  if (!(lambda1 > lambda2)) p.warnings_.push_back("wcmf: lambda1 <= lambda2; the regularizer is not bounded below");
  p.cache_norms();
  return p;
}

ProblemSpec ProblemSpec::ssnmf(DenseMatrix m, std::size_t rank, std::size_t s1, std::size_t s2) {
  require_data(m, rank);
  if (s1 < 1 || s1 > m.rows()) throw std::invalid_argument("ssnmf: s1 must lie in [1, m]");
  if (s2 < 1 || s2 > m.cols()) throw std::invalid_argument("ssnmf: s2 must lie in [1, d]");
  ProblemSpec p;
  p.kind_ = ProblemKind::SSNMF;
  p.m_ = std::move(m);
  p.rank_ = rank;
  p.s1_ = s1;
  p.s2_ = s2;
  p.cache_norms();
  return p;
}

void ProblemSpec::cache_norms() {
  m_norm_ = frobenius_norm(m_);
  if (kind_ == ProblemKind::GNMF) {
    l_frobenius_ = frobenius_norm(laplacian_);
    Prng rng(0x4C41504C41434500ULL);
    l_spectral_ = l_frobenius_ == 0.0 ? 0.0 : spectral_norm(laplacian_, 1e-10, 5000, rng).value;
  }
}

void ProblemSpec::require_shape(const FactorPair& x) const {
  if (x.u.rows() != m_.rows() || x.u.cols() != rank_ || x.v.rows() != rank_ || x.v.cols() != m_.cols()) {
    std::ostringstream msg;
    msg << "problem: factor shapes (" << x.u.rows() << "x" << x.u.cols() << ", " << x.v.rows() << "x"
        << x.v.cols() << ") do not match data " << m_.rows() << "x" << m_.cols() << " at rank " << rank_;
    throw std::invalid_argument(msg.str());
  }
}

namespace {

std::size_t nonzeros(std::span<const double> values) {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double x) { return x != 0.0; }));
}

bool nonnegative(const DenseMatrix& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double x) { return x >= -kFeasibilityTolerance; });
}

DenseMatrix residual(const ProblemSpec& p, const FactorPair& x) { return matmul(x.u, x.v) - p.data(); }

}  // namespace

bool is_feasible(const ProblemSpec& p, const FactorPair& x) {
  p.require_shape(x);
  switch (p.kind()) {
    case ProblemKind::WCMF: return true;
    case ProblemKind::GNMF: return nonnegative(x.u) && nonnegative(x.v);
    case ProblemKind::SSNMF: {
      if (!nonnegative(x.u) || !nonnegative(x.v)) return false;
      for (std::size_t j = 0; j < x.u.cols(); ++j)
        if (nonzeros(x.u.column(j)) > p.s1()) return false;
      for (std::size_t i = 0; i < x.v.rows(); ++i)
        if (nonzeros(x.v.row(i)) > p.s2()) return false;
      return true;
    }
  }
  return false;
}

double smooth_value(const ProblemSpec& p, const FactorPair& x) {
  p.require_shape(x);
  double value = 0.5 * squared_norm(residual(p, x));
  if (p.kind() == ProblemKind::GNMF && p.mu0() != 0.0) {
    value += 0.5 * p.mu0() * dot(x.u, matmul(p.laplacian(), x.u));
  }
  return value;
}

double nonsmooth_value(const ProblemSpec& p, const FactorPair& x) {
  if (p.kind() != ProblemKind::WCMF) return 0.0;
  double l1 = 0.0;
  for (double e : x.u.data()) l1 += std::abs(e);
  return p.lambda1() * l1 - 0.5 * p.lambda2() * squared_norm(x.u);
}

ObjectiveValue objective(const ProblemSpec& p, const FactorPair& x) {
  ObjectiveValue out;
  out.value = smooth_value(p, x) + nonsmooth_value(p, x);
  out.feasible = is_feasible(p, x);
  return out;
}

FactorPair full_gradient(const ProblemSpec& p, const FactorPair& x) {
  p.require_shape(x);
  const DenseMatrix r = residual(p, x);
  FactorPair g(matmul_a_bt(r, x.v), matmul_at_b(x.u, r));
  if (p.kind() == ProblemKind::GNMF && p.mu0() != 0.0) axpy(p.mu0(), matmul(p.laplacian(), x.u), g.u);
  return g;
}

FactorPair sample_gradient(const ProblemSpec& p, const FactorPair& x, std::span<const std::size_t> batch) {
  p.require_shape(x);
  const std::size_t n = p.samples();
  if (batch.empty()) throw std::invalid_argument("sample_gradient: empty minibatch");
  std::vector<char> seen(n, 0);
  for (std::size_t i : batch) {
    if (i >= n) throw std::invalid_argument("sample_gradient: index out of range");
    if (seen[i]) throw std::invalid_argument("sample_gradient: repeated index");
    seen[i] = 1;
  }

  const std::size_t m = p.rows();
  const std::size_t r = p.rank();
  const double weight = static_cast<double>(n) / static_cast<double>(batch.size());
  FactorPair g = FactorPair::zeros(m, r, n);
  std::vector<double> res(m);
  for (std::size_t col : batch) {
    // res = U V(:,col) - M(:,col)
    for (std::size_t i = 0; i < m; ++i) {
      auto urow = x.u.row(i);
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += urow[k] * x.v(k, col);
      res[i] = s - p.data()(i, col);
    }
    for (std::size_t i = 0; i < m; ++i) {
      auto grow = g.u.row(i);
      for (std::size_t k = 0; k < r; ++k) grow[k] += weight * res[i] * x.v(k, col);
    }
    for (std::size_t k = 0; k < r; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += x.u(i, k) * res[i];
      g.v(k, col) = weight * s;
    }
  }
  if (p.kind() == ProblemKind::GNMF && p.mu0() != 0.0) axpy(p.mu0(), matmul(p.laplacian(), x.u), g.u);
  return g;
}

KernelSpec prescribed_kernel(const ProblemSpec& p, double eta) {
  switch (p.kind()) {
    case ProblemKind::GNMF:
      return KernelSpec(3.0, p.data_norm() + p.mu0() * p.laplacian_frobenius(), 0.0);
    case ProblemKind::WCMF: return KernelSpec(3.0, p.data_norm(), eta * p.lambda2());
    case ProblemKind::SSNMF: return KernelSpec(3.0, p.data_norm(), 0.0);
  }
  throw std::logic_error("prescribed_kernel: unknown kind");
}

namespace {

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(b)); }

void require_prescribed(const ProblemSpec& p, const KernelSpec& k, double eta) {
  const KernelSpec expected = prescribed_kernel(p, eta);
  if (!close(k.quartic, expected.quartic) || !close(k.quadratic, expected.quadratic) ||
      !close(k.u_quadratic, expected.u_quadratic)) {
    throw std::invalid_argument("prox_step: kernel is not the model's prescribed kernel");
  }
  if (!(k.quadratic > 0.0)) throw std::invalid_argument("prox_step: kernel quadratic coefficient must be positive");
}

}  // namespace

FactorPair prox_step(const ProblemSpec& p, const KernelSpec& k, const FactorPair& g, const FactorPair& x_bar,
                     double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("prox_step: eta must be positive");
  p.require_shape(x_bar);
  require_same_shape(g, x_bar, "prox_step");
  require_prescribed(p, k, eta);

  // -P = grad psi(x_bar) - eta g,  -Q likewise
  FactorPair neg = kernel_gradient(k, x_bar);
  axpy(-eta, g, neg);

  FactorPair shape;
  switch (p.kind()) {
    case ProblemKind::GNMF:
      shape = FactorPair(project_nonneg(neg.u), project_nonneg(neg.v));
      break;
    case ProblemKind::WCMF:
      shape = FactorPair(soft_threshold(neg.u, p.lambda1() * eta), std::move(neg.v));
      break;
    case ProblemKind::SSNMF:
      shape = FactorPair(hard_threshold_columns(project_nonneg(neg.u), p.s1()),
                         hard_threshold_rows(project_nonneg(neg.v), p.s2()));
      break;
  }
  // the c ||U||^2 term of the WCMF kernel cancels against -lambda2/2 ||U||^2 in eta h
  const double t = cubic_root(3.0 * squared_norm(shape), k.quadratic);
  shape *= t;
  return shape;
}

double prox_subproblem_value(const ProblemSpec& p, const KernelSpec& k, const FactorPair& g,
                             const FactorPair& x_bar, double eta, const FactorPair& x) {
  if (!is_feasible(p, x)) return std::numeric_limits<double>::infinity();
  return eta * nonsmooth_value(p, x) + eta * dot(g, x) + kernel_value(k, x) - dot(kernel_gradient(k, x_bar), x);
}

DenseMatrix build_knn_laplacian(const DenseMatrix& samples, const LaplacianOptions& options) {
  const std::size_t n = samples.rows();
  if (options.neighbors >= n) throw std::invalid_argument("build_knn_laplacian: neighbors must be < number of rows");
  if (options.weighting == EdgeWeighting::Heat && !(options.sigma > 0.0))
    throw std::invalid_argument("build_knn_laplacian: heat weighting needs sigma > 0");

  DenseMatrix dist2(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      auto a = samples.row(i);
      auto b = samples.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
      dist2(i, j) = dist2(j, i) = s;
    }
  }

  DenseMatrix w(n, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist2(i, a) < dist2(i, b); });
    for (std::size_t k = 0; k < options.neighbors; ++k) {
      const std::size_t j = order[k];
      const double weight =
          options.weighting == EdgeWeighting::Binary ? 1.0 : std::exp(-dist2(i, j) / (options.sigma * options.sigma));
      w(i, j) = weight;
    }
    order.resize(n);
  }

  DenseMatrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double wij = std::max(w(i, j), w(j, i));
      l(i, j) = -wij;
      degree += wij;
    }
    l(i, i) = degree;
  }
  return l;
}

}  // namespace bregopt
