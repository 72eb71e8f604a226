#ifndef ROOTTREE_CONJUGACY_HPP
#define ROOTTREE_CONJUGACY_HPP

// Bayesian updating in both directions:
//  * Dirichlet hyperparameters over theta given observed trees;
//  * the tree posterior p(tau | x) for product-form likelihoods
//    p(x | tau) = prod_{v in V_tau} g_v(x, z_v^tau), with a fast variant for
//    likelihoods that only depend on the deepest tree node along one
//    root-to-leaf path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "roottree/base_tree.hpp"
#include "roottree/error.hpp"
#include "roottree/tree_dist.hpp"

namespace roottree {

// Product of independent Dirichlet(alpha_v) over the 2^k_max pattern
// probabilities of every node. Stored as a constant default plus sparse
// overrides.
class DirichletHyper {
 public:
  DirichletHyper(TreeShape shape, double default_alpha,
                 const std::map<NodeAddress, std::vector<double>>& overrides = {})
      : shape_(shape), default_alpha_(default_alpha) {
    if (!(default_alpha > 0.0) || !std::isfinite(default_alpha))
      throw DomainError("Dirichlet parameters must be positive");
    for (const auto& [a, alphas] : overrides) set_alpha(a, alphas);
  }

  const TreeShape& shape() const noexcept { return shape_; }
  double default_alpha() const noexcept { return default_alpha_; }

  std::vector<double> alpha(const NodeAddress& a) const {
    auto it = overrides_.find(a.index(shape_));
    if (it != overrides_.end()) return it->second;
    return std::vector<double>(shape_.pattern_count(), default_alpha_);
  }

  void set_alpha(const NodeAddress& a, std::vector<double> alphas) {
    if (alphas.size() != shape_.pattern_count())
      throw StructuralError("Dirichlet parameter at " + a.to_string() + " needs " +
                            std::to_string(shape_.pattern_count()) + " entries");
    for (double x : alphas)
      if (!(x > 0.0) || !std::isfinite(x))
        throw DomainError("Dirichlet parameters must be positive");
    overrides_[a.index(shape_)] = std::move(alphas);
  }

  // alpha_v(z) / sum_z' alpha_v(z')
  std::vector<double> posterior_mean(const NodeAddress& a) const {
    std::vector<double> m = alpha(a);
    double s = 0.0;
    for (double x : m) s += x;
    for (double& x : m) x /= s;
    return m;
  }

  std::vector<std::pair<NodeAddress, std::vector<double>>> overrides() const {
    std::vector<std::pair<NodeAddress, std::vector<double>>> out;
    for (const auto& [n, v] : overrides_) out.emplace_back(NodeAddress::from_index(shape_, n), v);
    std::sort(out.begin(), out.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    return out;
  }

  // Same shape, same default and the same alpha at every overridden node.
  friend bool operator==(const DirichletHyper& a, const DirichletHyper& b) {
    if (!(a.shape_ == b.shape_) || a.default_alpha_ != b.default_alpha_) return false;
    auto covers = [](const DirichletHyper& x, const DirichletHyper& y) {
      for (const auto& [n, v] : x.overrides_)
        if (y.alpha(NodeAddress::from_index(y.shape_, n)) != v) return false;
      return true;
    };
    return covers(a, b) && covers(b, a);
  }

 private:
  TreeShape shape_;
  double default_alpha_;
  std::unordered_map<NodeIndex, std::vector<double>> overrides_;
};

// dirichlet_posterior: alpha_v(z_v^tau) += 1 for every v in V_tau.
inline DirichletHyper dirichlet_posterior(const DirichletHyper& prior, const RootedSubtree& tree) {
  require_valid(prior.shape(), tree);
  DirichletHyper out = prior;
  for (const auto& [a, z] : tree.nodes()) {
    std::vector<double> al = out.alpha(a);
    al[z.index()] += 1.0;
    out.set_alpha(a, std::move(al));
  }
  return out;
}

inline DirichletHyper dirichlet_posterior(const DirichletHyper& prior,
                                          std::span<const RootedSubtree> trees) {
  DirichletHyper out = prior;
  for (const auto& t : trees) out = dirichlet_posterior(out, t);
  return out;
}

struct Posterior {
  TreeDistribution dist;
  double evidence;
};

// tree_posterior_general. q(x|v) is computed bottom-up,
//   q(x|v) = g_v(x, 0)                                     at max depth,
//   q(x|v) = sum_z theta_v(z) g_v(x, z) prod_{j in z} q(x|child j)  inside,
// and theta_v(z|x) = theta_v(z) g_v(x, z) prod_{j in z} q(x|child j) / q(x|v).
// The evidence q(x|root) equals p(x).
inline Posterior tree_posterior_general(const TreeDistribution& prior, const NodeFunction& g,
                                        OpStats* stats = nullptr) {
  const TreeShape& shape = prior.shape();
  detail::require_recursable(shape);
  const std::size_t patterns = shape.pattern_count();
  std::vector<double> prods(patterns);
  std::vector<double> weights(patterns);
  std::map<NodeAddress, NodeParam> updated;
  const double evidence = detail::bottom_up(
      shape,
      [&](NodeIndex n, const NodeAddress& a, std::span<const double> kids) {
        const NodeParam& theta = prior.param_at(n);
        if (kids.empty()) {
          if (stats) ++stats->pattern_evals;
          return g(a, EdgePattern{});
        }
        detail::subset_products(kids, prods);
        double q = 0.0;
        for (std::uint32_t z = 0; z < patterns; ++z) {
          if (stats) ++stats->pattern_evals;
          const double t = theta.at(z);
          weights[z] = t == 0.0 ? 0.0 : t * g(a, EdgePattern{z}) * prods[z];
          if (weights[z] < 0.0 || !std::isfinite(weights[z]))
            throw DomainError("likelihood factors must be finite and nonnegative");
          q += weights[z];
        }
        if (q > 0.0) {
          for (double& w : weights) w /= q;
          updated.emplace(a, NodeParam::from_probs(weights, shape.k_max()));
        } else {
          // Unreachable under the posterior; any valid parameter will do.
          updated.emplace(a, theta);
        }
        return q;
      },
      stats);
  if (!(evidence > 0.0)) throw DomainError("observation has zero marginal probability");
  return {TreeDistribution(shape, ExplicitRule{}, updated), evidence};
}

// Likelihood that depends only on the deepest tree node along the path from
// the root to `target` (a max-depth node): node_values[t] is g'_v for the
// path node at depth t.
struct PathLikelihood {
  NodeAddress target;
  std::vector<double> node_values;

  void validate(const TreeShape& shape) const {
    if (target.depth() != shape.d_max() || !target.valid_for(shape))
      throw StructuralError("path likelihood target must be a node at maximum depth");
    if (node_values.size() != shape.d_max() + 1u)
      throw StructuralError("path likelihood needs one value per path node");
    for (double x : node_values)
      if (!(x >= 0.0) || !std::isfinite(x))
        throw DomainError("likelihood factors must be finite and nonnegative");
  }

  // The equivalent product-form g: g'_v when v is on the path and its bit
  // toward the next path node is 0 (always, at the target), 1 otherwise.
  NodeFunction as_node_function() const {
    return [t = target, vals = node_values](const NodeAddress& a, EdgePattern z) {
      if (!a.is_prefix_of(t)) return 1.0;
      const unsigned depth = a.depth();
      if (depth == t.depth() || !z.test(t[depth])) return vals[depth];
      return 1.0;
    };
  }
};

namespace detail {

// Replaces the parameters of the inner path nodes of `dist` with their
// posterior and returns the evidence. stop(t, z) is the likelihood factor
// when the tree's path ends at depth t with pattern z (its bit toward the
// path child is clear; at depth d_max only z = 0 occurs). Visits exactly
// d_max + 1 nodes.
template <class Stop>
double apply_path_posterior_with(TreeDistribution& dist, const NodeAddress& target, Stop&& stop,
                                 OpStats* stats) {
  const TreeShape& shape = dist.shape();
  const unsigned d = shape.d_max();
  const std::uint32_t patterns = static_cast<std::uint32_t>(shape.pattern_count());
  std::vector<NodeIndex> path(d + 1);
  path[0] = 0;
  for (unsigned t = 0; t < d; ++t) path[t + 1] = shape.child_index(path[t], target[t]);

  // stops[t][z] for the patterns that end the path at depth t
  std::vector<std::vector<double>> stops(d, std::vector<double>(patterns, 0.0));
  std::vector<double> q(d + 1);
  q[d] = stop(d, EdgePattern{});
  if (stats) {
    ++stats->nodes_visited;
    ++stats->pattern_evals;
  }
  for (unsigned t = d; t-- > 0;) {
    const NodeParam& theta = dist.param_at(path[t]);
    const unsigned j = target[t];
    double off = 0.0, on = 0.0;
    for (std::uint32_t z = 0; z < patterns; ++z) {
      const double w = theta.at(z);
      if ((z >> j) & 1u) {
        on += w;
      } else if (w != 0.0) {
        stops[t][z] = stop(t, EdgePattern{z});
        off += w * stops[t][z];
      }
    }
    q[t] = off + on * q[t + 1];
    if (stats) {
      ++stats->nodes_visited;
      stats->pattern_evals += patterns;
    }
  }
  if (!(q[0] > 0.0)) throw DomainError("observation has zero marginal probability");

  for (unsigned t = 0; t < d; ++t) {
    if (!(q[t] > 0.0)) break;  // deeper path nodes are unreachable a posteriori
    const NodeParam& theta = dist.param_at(path[t]);
    const unsigned j = target[t];
    std::vector<double> post(patterns);
    for (std::uint32_t z = 0; z < patterns; ++z)
      post[z] = theta.at(z) * ((z >> j) & 1u ? q[t + 1] : stops[t][z]) / q[t];
    dist.set_param_at(path[t],
                      std::make_shared<const NodeParam>(NodeParam::from_probs(std::move(post),
                                                                              shape.k_max())));
  }
  return q[0];
}

inline double apply_path_posterior(TreeDistribution& dist, const NodeAddress& target,
                                   std::span<const double> values, OpStats* stats) {
  return apply_path_posterior_with(
      dist, target, [&](unsigned t, EdgePattern) { return values[t]; }, stats);
}

}  // namespace detail

// tree_posterior_path: same posterior and evidence as the general form
// on the equivalent likelihood, touching only the root-to-target path.
inline Posterior tree_posterior_path(const TreeDistribution& prior, const PathLikelihood& lik,
                                     OpStats* stats = nullptr) {
  lik.validate(prior.shape());
  TreeDistribution post = prior;
  const double evidence = detail::apply_path_posterior(post, lik.target, lik.node_values, stats);
  return {std::move(post), evidence};
}

}  // namespace roottree

#endif  // ROOTTREE_CONJUGACY_HPP
