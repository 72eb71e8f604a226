#ifndef ROOTTREE_ORACLE_HPP
#define ROOTTREE_ORACLE_HPP

// Brute-force reference computations over the full subtree enumeration.
// Nothing here calls the recursions it is used to check: tree probabilities
// are direct products of theta over the listed nodes.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "roottree/base_tree.hpp"
#include "roottree/context_tree.hpp"
#include "roottree/tree_dist.hpp"

namespace roottree::oracle {

struct WeightedTree {
  RootedSubtree tree;
  double p;
};

inline double direct_prob(const TreeDistribution& dist, const RootedSubtree& tree) {
  double p = 1.0;
  for (const auto& [a, z] : tree.nodes()) p *= dist.param(a)[z];
  return p;
}

inline std::vector<WeightedTree> table(const TreeDistribution& dist,
                                       std::uint64_t cap = kDefaultEnumerationCap) {
  std::vector<WeightedTree> out;
  for_each_subtree(
      dist.shape(), [&](const RootedSubtree& t) { out.push_back({t, direct_prob(dist, t)}); },
      cap);
  return out;
}

// E[f(T)]
inline double expect(std::span<const WeightedTree> tab,
                     const std::function<double(const RootedSubtree&)>& f) {
  double s = 0.0;
  for (const auto& w : tab)
    if (w.p != 0.0) s += w.p * f(w.tree);
  return s;
}

inline double total(std::span<const WeightedTree> tab) {
  return expect(tab, [](const RootedSubtree&) { return 1.0; });
}

inline double pattern_event_prob(std::span<const WeightedTree> tab, const NodeAddress& v,
                                 EdgePattern z) {
  return expect(tab, [&](const RootedSubtree& t) {
    const auto pz = t.pattern(v);
    return pz && *pz == z ? 1.0 : 0.0;
  });
}

inline double node_prob(std::span<const WeightedTree> tab, const NodeAddress& v) {
  return expect(tab, [&](const RootedSubtree& t) { return t.contains(v) ? 1.0 : 0.0; });
}

// The edge into v is in the tree iff v is.
inline double edge_prob(std::span<const WeightedTree> tab, const NodeAddress& v) {
  return expect(tab, [&](const RootedSubtree& t) {
    const auto pz = t.pattern(parent(v));
    return pz && pz->test(v.path().back()) ? 1.0 : 0.0;
  });
}

inline double leaf_prob(std::span<const WeightedTree> tab, const NodeAddress& v) {
  return expect(tab, [&](const RootedSubtree& t) {
    const auto pz = t.pattern(v);
    return pz && pz->is_zero() ? 1.0 : 0.0;
  });
}

inline double inner_prob(std::span<const WeightedTree> tab, const NodeAddress& v) {
  return expect(tab, [&](const RootedSubtree& t) {
    const auto pz = t.pattern(v);
    return pz && !pz->is_zero() ? 1.0 : 0.0;
  });
}

inline double max_prob(std::span<const WeightedTree> tab) {
  double m = 0.0;
  for (const auto& w : tab) m = std::max(m, w.p);
  return m;
}

inline double product_expectation(std::span<const WeightedTree> tab, const NodeFunction& g) {
  return expect(tab, [&](const RootedSubtree& t) {
    double f = 1.0;
    for (const auto& [a, z] : t.nodes()) f *= g(a, z);
    return f;
  });
}

inline double sum_expectation(std::span<const WeightedTree> tab, const NodeFunction& g) {
  return expect(tab, [&](const RootedSubtree& t) {
    double f = 0.0;
    for (const auto& [a, z] : t.nodes()) f += g(a, z);
    return f;
  });
}

inline double entropy(std::span<const WeightedTree> tab) {
  double h = 0.0;
  for (const auto& w : tab)
    if (w.p > 0.0) h -= w.p * std::log(w.p);
  return h;
}

// D(p || q); +inf when p puts mass on a tree q excludes.
inline double kl(std::span<const WeightedTree> p, std::span<const WeightedTree> q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].p == 0.0) continue;
    if (q[i].p == 0.0) return std::numeric_limits<double>::infinity();
    d += p[i].p * std::log(p[i].p / q[i].p);
  }
  return d;
}

// Bayes: posterior weights p(tau) prod_v g_v(z_v) / evidence, same order as
// `prior`.
struct BrutePosterior {
  std::vector<double> post;
  double evidence = 0.0;
};

inline BrutePosterior posterior(std::span<const WeightedTree> prior, const NodeFunction& g) {
  BrutePosterior out;
  out.post.resize(prior.size());
  for (std::size_t i = 0; i < prior.size(); ++i) {
    double lik = 1.0;
    for (const auto& [a, z] : prior[i].tree.nodes()) lik *= g(a, z);
    out.post[i] = prior[i].p * lik;
    out.evidence += out.post[i];
  }
  if (out.evidence > 0.0)
    for (double& x : out.post) x /= out.evidence;
  return out;
}

// Joint marginal of a symbol sequence under the generalized context-tree
// mixture, by summing over every tree. For each tree and position, the
// emitting node is the deepest tree node on the context path, and its KT
// predictive uses the symbols of the earlier positions that same node
// emitted under that tree.
inline double context_joint(const ModelConfig& config, std::span<const Symbol> seq) {
  const TreeShape& shape = config.shape;
  const TreeDistribution prior = config.prior.distribution(shape);
  const unsigned k = shape.k_max();
  const unsigned d = shape.d_max();
  std::vector<NodeAddress> ctx;
  for (std::size_t i = 1; i <= seq.size(); ++i) ctx.push_back(context_of(seq, i, d, config.padding));

  auto prefix = [](const NodeAddress& c, unsigned depth) {
    return NodeAddress(std::vector<unsigned>(c.path().begin(), c.path().begin() + depth));
  };

  double joint = 0.0;
  for_each_subtree(shape, [&](const RootedSubtree& t) {
    const double pt = direct_prob(prior, t);
    if (pt == 0.0) return;
    std::vector<NodeAddress> emitter;
    double lik = 1.0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      unsigned depth = 0;
      while (depth < d && t.pattern(prefix(ctx[i], depth))->test(ctx[i][depth])) ++depth;
      emitter.push_back(prefix(ctx[i], depth));
      std::vector<double> n(k, 0.0);
      double total = 0.0;
      for (std::size_t j = 0; j < i; ++j)
        if (emitter[j] == emitter[i]) {
          n[seq[j]] += 1.0;
          total += 1.0;
        }
      lik *= (n[seq[i]] + 0.5) / (total + k / 2.0);
    }
    joint += pt * lik;
  });
  return joint;
}

// log of the KT block probability of a count vector.
inline double kt_block_log(std::span<const double> n) {
  const double k = static_cast<double>(n.size());
  double total = 0.0;
  double lp = std::lgamma(k / 2.0);
  for (double c : n) {
    lp += std::lgamma(c + 0.5) - std::lgamma(0.5);
    total += c;
  }
  return lp - std::lgamma(total + k / 2.0);
}

// Classic full-tree context-tree weighting: P_w(v) = P_e(v) at depth d_max,
// (1 - alpha) P_e(v) + alpha prod_j P_w(vj) above. Computed over block counts
// only, with no reference to the generalized machinery.
inline double ctw_full_tree(const TreeShape& shape, Symbol padding, double alpha,
                            std::span<const Symbol> seq) {
  const unsigned k = shape.k_max();
  const unsigned d = shape.d_max();
  std::vector<std::vector<double>> counts(shape.node_count(), std::vector<double>(k, 0.0));
  for (std::size_t i = 1; i <= seq.size(); ++i) {
    const NodeAddress c = context_of(seq, i, d, padding);
    NodeIndex n = 0;
    counts[n][seq[i - 1]] += 1.0;
    for (unsigned t = 0; t < d; ++t) {
      n = shape.child_index(n, c[t]);
      counts[n][seq[i - 1]] += 1.0;
    }
  }
  std::vector<double> pw(shape.node_count());
  for (NodeIndex n = shape.node_count(); n-- > 0;) {
    const double pe = std::exp(kt_block_log(counts[n]));
    if (shape.is_leaf_index(n)) {
      pw[n] = pe;
      continue;
    }
    double prod = 1.0;
    for (unsigned j = 0; j < k; ++j) prod *= pw[shape.child_index(n, j)];
    pw[n] = (1.0 - alpha) * pe + alpha * prod;
  }
  return pw[0];
}

}  // namespace roottree::oracle

#endif  // ROOTTREE_ORACLE_HPP
