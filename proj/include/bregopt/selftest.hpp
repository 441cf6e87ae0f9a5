#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bregopt {

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Small oracle suite: cubic root vs bisection, thresholding vs brute force,
/// prox vs sampled candidates, gradients vs finite differences, estimator
/// identities, minibatch unbiasedness, clustering accuracy vs enumeration.
std::vector<SelftestCheck> run_selftest(std::uint64_t seed);

}  // namespace bregopt
