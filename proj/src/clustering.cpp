#include "bregopt/clustering.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace bregopt {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

std::size_t distinct_rows(const DenseMatrix& points) {
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto r = points.row(i);
    rows.emplace(r.begin(), r.end());
  }
  return rows.size();
}

DenseMatrix seed_plus_plus(const DenseMatrix& points, std::size_t k, Prng& rng) {
  const std::size_t n = points.rows();
  DenseMatrix centers(k, points.cols());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(pick).begin(), points.row(pick).end(), centers.row(c).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(points.row(i), centers.row(c)));
      total += nearest[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      pick = rng.below(n);
      continue;
    }
    double target = rng.uniform() * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= nearest[i];
      if (target < 0.0 && nearest[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centers;
}

KMeansResult lloyd(const DenseMatrix& points, DenseMatrix centers, std::size_t max_iter) {
  const std::size_t n = points.rows();
  const std::size_t k = centers.rows();
  KMeansResult res;
  res.assignment.assign(n, 0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = it == 0;
    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = sq_dist(points.row(i), centers.row(c));
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (res.assignment[i] != best) changed = true;
      res.assignment[i] = best;
      res.inertia += best_d;
    }
    res.iterations = it + 1;
    if (!changed) break;

    DenseMatrix sums(k, points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(res.assignment[i]);
      auto src = points.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      auto dst = centers.row(c);
      auto src = sums.row(c);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
  }
  res.centers = std::move(centers);
  return res;
}

}  // namespace

KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::size_t restarts, Prng& rng, std::size_t max_iter) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
  if (points.rows() == 0) throw std::invalid_argument("kmeans: no points");
  if (k > distinct_rows(points)) throw std::invalid_argument("kmeans: k exceeds the number of distinct rows");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    KMeansResult res = lloyd(points, seed_plus_plus(points, k, rng), max_iter);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

std::vector<std::size_t> hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  for (const auto& row : cost)
    if (row.size() != n) throw std::invalid_argument("hungarian: cost matrix must be square");
  if (n == 0) return {};
  // potentials formulation, 1-based with a dummy column 0
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

double clustering_accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("clustering_accuracy: length mismatch");
  if (predicted.empty()) throw std::invalid_argument("clustering_accuracy: no points");
  std::map<std::size_t, std::size_t> pred_ids, true_ids;
  for (std::size_t p : predicted) pred_ids.emplace(p, pred_ids.size());
  for (std::size_t t : truth) true_ids.emplace(t, true_ids.size());
  const std::size_t n = std::max(pred_ids.size(), true_ids.size());
  std::vector<std::vector<double>> confusion(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < predicted.size(); ++i) confusion[pred_ids[predicted[i]]][true_ids[truth[i]]] += 1.0;
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i][j] = -confusion[i][j];
  const auto assign = hungarian_min_cost(cost);
  double matched = 0.0;
  for (std::size_t i = 0; i < n; ++i) matched += confusion[i][assign[i]];
  return matched / static_cast<double>(predicted.size());
}

double kmeans_accuracy(const DenseMatrix& u, const std::vector<std::size_t>& true_labels, std::size_t k,
                       std::size_t restarts, Prng& rng) {
  if (u.rows() != true_labels.size()) throw std::invalid_argument("kmeans_accuracy: one label per row required");
  return clustering_accuracy(kmeans(u, k, restarts, rng).assignment, true_labels);
}

}  // namespace bregopt
