#pragma once

#include <cstddef>
#include <vector>

#include "bregopt/dense_matrix.hpp"
#include "bregopt/prng.hpp"

namespace bregopt {

struct KMeansResult {
  std::vector<std::size_t> assignment;
  DenseMatrix centers;
  double inertia = 0.0;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm on the rows of `points` with k-means++ seeding; best of
/// `restarts` runs by inertia. Throws when k is 0 or exceeds the number of
/// distinct rows.
KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::size_t restarts, Prng& rng,
                    std::size_t max_iter = 300);

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// O(n^3)). Returns assignment[row] = column.
std::vector<std::size_t> hungarian_min_cost(const std::vector<std::vector<double>>& cost);

/// Fraction of points whose predicted cluster maps to their true label under
/// the best one-to-one relabeling.
double clustering_accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth);

/// k-means on the rows of U followed by clustering_accuracy.
double kmeans_accuracy(const DenseMatrix& u, const std::vector<std::size_t>& true_labels, std::size_t k,
                       std::size_t restarts, Prng& rng);

}  // namespace bregopt
