#include "bregopt/synthetic.hpp"

#include <cstring>
#include <stdexcept>

namespace bregopt {

void SyntheticSpec::validate() const {
  if (m == 0 || d == 0) throw std::invalid_argument("synthetic: m and d must be positive");
  if (r_true == 0 || r_true > std::min(m, d)) throw std::invalid_argument("synthetic: need 1 <= r_true <= min(m, d)");
  if (cluster_count == 0 || cluster_count > m) throw std::invalid_argument("synthetic: need 1 <= cluster_count <= m");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synthetic: noise_sigma must be nonnegative");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Prng rng(spec.seed);
  SyntheticData out;
  out.u_true = DenseMatrix(spec.m, spec.r_true);
  out.labels.resize(spec.m);
  for (std::size_t i = 0; i < spec.m; ++i) {
    const std::size_t cluster = i % spec.cluster_count;
    out.labels[i] = cluster;
    const std::size_t dominant = cluster % spec.r_true;
    for (std::size_t j = 0; j < spec.r_true; ++j)
      out.u_true(i, j) = j == dominant ? rng.uniform(0.8, 1.2) : rng.uniform(0.0, 0.1);
  }
  out.v_true = DenseMatrix(spec.r_true, spec.d);
  for (double& x : out.v_true.data()) x = rng.uniform();
  out.m = matmul(out.u_true, out.v_true);
  if (spec.noise_sigma > 0.0)
    for (double& x : out.m.data()) x += spec.noise_sigma * rng.normal();
  return out;
}

FactorPair init_point(std::size_t m, std::size_t r, std::size_t d, Prng& rng) {
  FactorPair x = FactorPair::zeros(m, r, d);
  for (double& e : x.u.data()) e = rng.uniform(0.0, 0.1);
  for (double& e : x.v.data()) e = rng.uniform(0.0, 0.1);
  return x;
}

std::uint64_t fingerprint(const FactorPair& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::span<const double> values) {
    for (double v : values) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  };
  mix(x.u.data());
  mix(x.v.data());
  return h;
}

}  // namespace bregopt
