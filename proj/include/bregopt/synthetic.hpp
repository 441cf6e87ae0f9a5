#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bregopt/dense_matrix.hpp"
#include "bregopt/kernel.hpp"
#include "bregopt/prng.hpp"

namespace bregopt {

struct SyntheticSpec {
  std::size_t m = 60;
  std::size_t d = 40;
  std::size_t r_true = 3;
  double noise_sigma = 0.05;
  std::size_t cluster_count = 3;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument unless 1 <= r_true <= min(m, d),
  /// 1 <= cluster_count <= m and noise_sigma >= 0.
  void validate() const;
};

struct SyntheticData {
  DenseMatrix m;
  /// Cluster of each row of m, in [0, cluster_count).
  std::vector<std::size_t> labels;
  DenseMatrix u_true;
  DenseMatrix v_true;
};

/// M = U* V* + sigma N. Row i belongs to cluster i mod cluster_count; its
/// dominant component (cluster mod r_true) is uniform(0.8, 1.2), the other
/// components uniform(0, 0.1). V* is uniform(0, 1), N standard normal.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// U (m x r) and V (r x d) with entries uniform on [0, 0.1).
FactorPair init_point(std::size_t m, std::size_t r, std::size_t d, Prng& rng);

/// FNV-1a over the raw bytes of both blocks; used to prove a shared start.
std::uint64_t fingerprint(const FactorPair& x);

}  // namespace bregopt
