#ifndef ROOTTREE_RANDOM_HPP
#define ROOTTREE_RANDOM_HPP

// Random instances for the verification harness and tests.

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "roottree/tree_dist.hpp"

namespace roottree {

// Mixes a base seed with a stream number (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Random probability vector; each entry is zeroed with probability
// `zero_fraction` (at least one entry survives).
inline std::vector<double> random_simplex(Rng& rng, std::size_t n, double zero_fraction = 0.0) {
  std::vector<double> w(n);
  double sum = 0.0;
  for (double& x : w) {
    x = uniform01(rng) < zero_fraction ? 0.0 : 0.05 + uniform01(rng);
    sum += x;
  }
  if (sum == 0.0) {
    w[static_cast<std::size_t>(rng() % n)] = 1.0;
    sum = 1.0;
  }
  for (double& x : w) x /= sum;
  return w;
}

// Explicit distribution with an independent random parameter at every
// inner node.
inline TreeDistribution random_distribution(const TreeShape& shape, Rng& rng,
                                            double zero_fraction = 0.0) {
  detail::require_recursable(shape);
  std::map<NodeAddress, NodeParam> params;
  for (NodeIndex n = 0; n < shape.inner_count(); ++n)
    params.emplace(NodeAddress::from_index(shape, n),
                   NodeParam::from_probs(random_simplex(rng, shape.pattern_count(), zero_fraction),
                                         shape.k_max()));
  return TreeDistribution(shape, ExplicitRule{}, params);
}

// Random table g_v(z) in [lo, hi) for every (node, pattern).
class RandomNodeTable {
 public:
  RandomNodeTable(const TreeShape& shape, Rng& rng, double lo, double hi)
      : shape_(shape), values_(shape.node_count() * shape.pattern_count()) {
    for (double& v : values_) v = lo + (hi - lo) * uniform01(rng);
  }

  double operator()(const NodeAddress& a, EdgePattern z) const {
    return values_[a.index(shape_) * shape_.pattern_count() + z.index()];
  }

 private:
  TreeShape shape_;
  std::vector<double> values_;
};

}  // namespace roottree

#endif  // ROOTTREE_RANDOM_HPP
