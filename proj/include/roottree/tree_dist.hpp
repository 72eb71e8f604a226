#ifndef ROOTTREE_TREE_DIST_HPP
#define ROOTTREE_TREE_DIST_HPP

// Probability distribution over rooted subtrees,
//
//   p(tau) = prod_{v in V_tau} theta_v(z_v^tau),
//
// and the exact recursions built on it: normalization, node/edge event
// probabilities, mode, product- and sum-form expectations, entropy and KL.
//
// Every whole-tree recursion walks heap indices from the last leaf back to
// the root, so children are always finished before their parent and no call
// stack grows with the tree.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "roottree/base_tree.hpp"
#include "roottree/error.hpp"

namespace roottree {

inline constexpr double kParamSumTolerance = 1e-9;

// Whole-tree recursions allocate one double per base-tree node.
inline constexpr std::uint64_t kMaxRecursionNodes = std::uint64_t{1} << 26;

// Pattern probabilities theta_v(z) for one node, indexed by pattern index.
class NodeParam {
 public:
  NodeParam() = default;

  // Validates and renormalizes: entries must be finite and nonnegative and
  // sum to 1 within kParamSumTolerance.
  static NodeParam from_probs(std::vector<double> probs, unsigned k) {
    if (probs.size() != (std::size_t{1} << k))
      throw StructuralError("node parameter needs " + std::to_string(std::size_t{1} << k) +
                            " entries, got " + std::to_string(probs.size()));
    double sum = 0.0;
    for (double p : probs) {
      if (!std::isfinite(p) || p < 0.0)
        throw DomainError("pattern probabilities must be finite and nonnegative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kParamSumTolerance)
      throw DomainError("pattern probabilities sum to " + std::to_string(sum) + ", not 1");
    // Rescale only beyond rounding noise so that re-reading a written
    // parameter gives back the same doubles.
    if (std::abs(sum - 1.0) > static_cast<double>(probs.size()) * std::numeric_limits<double>::epsilon())
      for (double& p : probs) p /= sum;
    return NodeParam(std::move(probs));
  }

  static NodeParam point_mass(unsigned k, EdgePattern z) {
    std::vector<double> probs(std::size_t{1} << k, 0.0);
    probs.at(z.index()) = 1.0;
    return NodeParam(std::move(probs));
  }

  static NodeParam uniform(unsigned k) {
    const std::size_t n = std::size_t{1} << k;
    return NodeParam(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  // theta(all ones) = alpha, theta(0) = 1 - alpha; the full-tree prior class.
  static NodeParam full_tree(unsigned k, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("full_tree alpha must be in [0, 1]");
    std::vector<double> probs(std::size_t{1} << k, 0.0);
    probs.front() = 1.0 - alpha;
    probs.back() += alpha;
    return NodeParam(std::move(probs));
  }

  // Bypasses validation. Only the fault-injection harness uses this.
  static NodeParam unchecked(std::vector<double> probs) { return NodeParam(std::move(probs)); }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](EdgePattern z) const { return probs_[z.index()]; }
  double at(std::size_t i) const { return probs_.at(i); }
  std::span<const double> probs() const noexcept { return probs_; }

  // sum of theta(z) over patterns with bit j set
  double edge_marginal(unsigned j) const {
    double s = 0.0;
    for (std::size_t z = 0; z < probs_.size(); ++z)
      if ((z >> j) & 1u) s += probs_[z];
    return s;
  }

  double sum() const {
    double s = 0.0;
    for (double p : probs_) s += p;
    return s;
  }

  friend bool operator==(const NodeParam&, const NodeParam&) = default;

 private:
  explicit NodeParam(std::vector<double> probs) : probs_(std::move(probs)) {}
  std::vector<double> probs_;
};

struct UniformRule {
  friend bool operator==(const UniformRule&, const UniformRule&) = default;
};
struct FullTreeRule {
  double alpha = 0.5;
  friend bool operator==(const FullTreeRule&, const FullTreeRule&) = default;
};
// Every inner node comes from an override; max-depth nodes default to the
// zero pattern.
struct ExplicitRule {
  friend bool operator==(const ExplicitRule&, const ExplicitRule&) = default;
};
using DefaultRule = std::variant<UniformRule, FullTreeRule, ExplicitRule>;

// Per-node parameters as a default rule plus sparse overrides. Overrides
// hold shared immutable NodeParams, so copies and posterior updates share
// everything they do not touch.
class TreeDistribution {
 public:
  using ParamPtr = std::shared_ptr<const NodeParam>;

  TreeDistribution(TreeShape shape, DefaultRule rule,
                   const std::map<NodeAddress, NodeParam>& overrides = {})
      : shape_(shape), rule_(rule) {
    const unsigned k = shape_.k_max();
    leaf_default_ = std::make_shared<const NodeParam>(NodeParam::point_mass(k, EdgePattern{}));
    if (std::holds_alternative<UniformRule>(rule_))
      inner_default_ = std::make_shared<const NodeParam>(NodeParam::uniform(k));
    else if (auto* ft = std::get_if<FullTreeRule>(&rule_))
      inner_default_ = std::make_shared<const NodeParam>(NodeParam::full_tree(k, ft->alpha));
    for (const auto& [addr, param] : overrides) set_param(addr, param);
    if (std::holds_alternative<ExplicitRule>(rule_)) {
      if (shape_.inner_count() > kMaxRecursionNodes)
        throw StructuralError("explicit distribution is too large");
      for (NodeIndex n = 0; n < shape_.inner_count(); ++n)
        if (!overrides_.count(n))
          throw StructuralError("explicit distribution lacks parameters for node " +
                                NodeAddress::from_index(shape_, n).to_string());
    }
  }

  static TreeDistribution uniform(TreeShape shape) { return {shape, UniformRule{}}; }
  static TreeDistribution full_tree(TreeShape shape, double alpha) {
    return {shape, FullTreeRule{alpha}};
  }

  const TreeShape& shape() const noexcept { return shape_; }
  const DefaultRule& rule() const noexcept { return rule_; }

  const NodeParam& param_at(NodeIndex n) const { return *param_ptr(n); }
  const NodeParam& param(const NodeAddress& a) const { return param_at(a.index(shape_)); }

  const ParamPtr& param_ptr(NodeIndex n) const {
    auto it = overrides_.find(n);
    if (it != overrides_.end()) return it->second;
    if (shape_.is_leaf_index(n)) return leaf_default_;
    if (!inner_default_) throw StructuralError("no parameters for node index " + std::to_string(n));
    return inner_default_;
  }

  bool has_override(NodeIndex n) const { return overrides_.count(n) != 0; }
  std::size_t override_count() const noexcept { return overrides_.size(); }

  // Overrides in address order.
  std::vector<std::pair<NodeAddress, ParamPtr>> overrides() const {
    std::vector<std::pair<NodeAddress, ParamPtr>> out;
    out.reserve(overrides_.size());
    for (const auto& [n, p] : overrides_) out.emplace_back(NodeAddress::from_index(shape_, n), p);
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  TreeDistribution with_param(const NodeAddress& a, const NodeParam& param) const {
    TreeDistribution out = *this;
    out.set_param(a, param);
    return out;
  }

  // Replaces one parameter without any validation; for fault injection.
  TreeDistribution with_unchecked_param(const NodeAddress& a, std::vector<double> probs) const {
    TreeDistribution out = *this;
    out.overrides_[a.index(shape_)] =
        std::make_shared<const NodeParam>(NodeParam::unchecked(std::move(probs)));
    return out;
  }

  // Single-writer mutation used by sequential posterior updates.
  void set_param(const NodeAddress& a, const NodeParam& param) {
    set_param_at(a.index(shape_), std::make_shared<const NodeParam>(param));
  }

  void set_param_at(NodeIndex n, ParamPtr param) {
    if (n >= shape_.node_count()) throw StructuralError("node index outside the base tree");
    if (param->size() != shape_.pattern_count())
      throw StructuralError("node parameter has the wrong number of patterns");
    if (shape_.is_leaf_index(n)) {
      for (std::size_t z = 1; z < param->size(); ++z)
        if (param->at(z) != 0.0)
          throw DomainError("node " + NodeAddress::from_index(shape_, n).to_string() +
                            " is at maximum depth; all mass must be on the zero pattern");
    }
    overrides_[n] = std::move(param);
  }

 private:
  TreeShape shape_;
  DefaultRule rule_;
  ParamPtr inner_default_;
  ParamPtr leaf_default_;
  std::unordered_map<NodeIndex, ParamPtr> overrides_;
};

// G_v(z) / g_v(z): a real value for every (node, pattern) pair.
using NodeFunction = std::function<double(const NodeAddress&, EdgePattern)>;

// Evaluation counters for the complexity contracts.
struct OpStats {
  std::uint64_t nodes_visited = 0;
  std::uint64_t pattern_evals = 0;
};

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

namespace detail {

inline void require_recursable(const TreeShape& shape) {
  if (shape.node_count() > kMaxRecursionNodes)
    throw DomainError("base tree with " + std::to_string(shape.node_count()) +
                      " nodes is too large for whole-tree recursion");
}

// prods[z] = prod over set bits j of z of child[j]
inline void subset_products(std::span<const double> child, std::vector<double>& prods) {
  prods[0] = 1.0;
  for (std::size_t z = 1; z < prods.size(); ++z)
    prods[z] = prods[z & (z - 1)] * child[std::countr_zero(z)];
}

inline void subset_sums(std::span<const double> child, std::vector<double>& sums) {
  sums[0] = 0.0;
  for (std::size_t z = 1; z < sums.size(); ++z)
    sums[z] = sums[z & (z - 1)] + child[std::countr_zero(z)];
}

// Bottom-up driver: visit(n, address, child_values) returns the value at n;
// child_values is empty for leaves. Returns the root value.
template <class Visit>
double bottom_up(const TreeShape& shape, Visit&& visit, OpStats* stats) {
  require_recursable(shape);
  const std::uint64_t count = shape.node_count();
  const unsigned k = shape.k_max();
  std::vector<double> value(count);
  for (NodeIndex n = count; n-- > 0;) {
    const NodeAddress addr = NodeAddress::from_index(shape, n);
    std::span<const double> kids;
    if (!shape.is_leaf_index(n)) kids = std::span<const double>(value).subspan(n * k + 1, k);
    value[n] = visit(n, addr, kids);
    if (stats) ++stats->nodes_visited;
  }
  return value[0];
}

// phi(v) = G_v(0) at leaves, sum_z G_v(z) prod_{j in z} phi(child j) inside.
template <class Eval>
double sum_product(const TreeShape& shape, Eval&& eval, OpStats* stats) {
  std::vector<double> prods(shape.pattern_count());
  return bottom_up(
      shape,
      [&](NodeIndex n, const NodeAddress& addr, std::span<const double> kids) {
        if (kids.empty()) {
          if (stats) ++stats->pattern_evals;
          return eval(n, addr, EdgePattern{});
        }
        subset_products(kids, prods);
        double s = 0.0;
        for (std::uint32_t z = 0; z < prods.size(); ++z) {
          const double g = eval(n, addr, EdgePattern{z});
          if (stats) ++stats->pattern_evals;
          if (g != 0.0) s += g * prods[z];
        }
        return s;
      },
      stats);
}

// xi(v) = g_v(0) at leaves, sum_z theta(z) (g_v(z) + sum_{j in z} xi(child j))
// inside; terms with theta(z) = 0 contribute nothing even if g is infinite.
template <class Eval>
double sum_form(const TreeDistribution& dist, Eval&& eval, OpStats* stats) {
  const TreeShape& shape = dist.shape();
  std::vector<double> sums(shape.pattern_count());
  return bottom_up(
      shape,
      [&](NodeIndex n, const NodeAddress& addr, std::span<const double> kids) {
        const NodeParam& theta = dist.param_at(n);
        if (kids.empty()) {
          if (stats) ++stats->pattern_evals;
          return eval(n, addr, EdgePattern{});
        }
        subset_sums(kids, sums);
        double s = 0.0;
        for (std::uint32_t z = 0; z < sums.size(); ++z) {
          const double g = eval(n, addr, EdgePattern{z});
          if (stats) ++stats->pattern_evals;
          const double w = theta.at(z);
          if (w != 0.0) s += w * (g + sums[z]);
        }
        return s;
      },
      stats);
}

}  // namespace detail

// log_prob: sum of log theta_v(z_v) over the tree's nodes; -inf when a
// factor is zero.
inline double log_prob(const TreeDistribution& dist, const RootedSubtree& tree) {
  require_valid(dist.shape(), tree);
  double lp = 0.0;
  for (const auto& [a, z] : tree.nodes()) {
    const double t = dist.param(a)[z];
    if (t == 0.0) return -std::numeric_limits<double>::infinity();
    lp += std::log(t);
  }
  return lp;
}

inline double prob(const TreeDistribution& dist, const RootedSubtree& tree) {
  return std::exp(log_prob(dist, tree));
}

// generic_sum: sum over all subtrees of prod_{v in V_tau} G_v(z_v^tau).
inline double generic_sum(const TreeShape& shape, const NodeFunction& g,
                          OpStats* stats = nullptr) {
  return detail::sum_product(
      shape, [&](NodeIndex, const NodeAddress& a, EdgePattern z) { return g(a, z); }, stats);
}

// Total mass, 1 for every valid distribution.
inline double total_mass(const TreeDistribution& dist, OpStats* stats = nullptr) {
  return detail::sum_product(
      dist.shape(),
      [&](NodeIndex n, const NodeAddress&, EdgePattern z) { return dist.param_at(n)[z]; }, stats);
}

struct NormalizationReport {
  double total = 0.0;
  bool ok = true;
  bool node_fault = false;  // a node's own pattern vector is invalid
  NodeAddress first_bad_node;  // meaningful when node_fault
  double first_bad_sum = 0.0;
};

// Checks each node's pattern sum and the total mass against `tol`.
inline NormalizationReport check_normalization(const TreeDistribution& dist, double tol = 1e-12) {
  NormalizationReport r;
  r.total = total_mass(dist);
  detail::require_recursable(dist.shape());
  for (NodeIndex n = 0; n < dist.shape().node_count(); ++n) {
    const NodeParam& p = dist.param_at(n);
    const double s = p.sum();
    bool bad = !(std::abs(s - 1.0) <= tol);
    for (double v : p.probs()) bad = bad || !(v >= 0.0);
    if (bad) {
      r.ok = false;
      r.node_fault = true;
      r.first_bad_node = NodeAddress::from_index(dist.shape(), n);
      r.first_bad_sum = s;
      return r;
    }
  }
  r.ok = std::abs(r.total - 1.0) <= tol;
  return r;
}

// sample: ancestral sampling. Each included node draws its pattern from
// theta_v and the set bits are expanded in turn.
inline RootedSubtree sample(const TreeDistribution& dist, Rng& rng) {
  const TreeShape& shape = dist.shape();
  RootedSubtree::NodeMap nodes;
  std::vector<NodeAddress> work{NodeAddress::root()};
  while (!work.empty()) {
    NodeAddress a = std::move(work.back());
    work.pop_back();
    const NodeParam& theta = dist.param(a);
    const double u = uniform01(rng);
    double cum = 0.0;
    std::uint32_t pick = 0;
    std::uint32_t last_positive = 0;
    bool found = false;
    for (std::uint32_t z = 0; z < theta.size(); ++z) {
      if (theta.at(z) > 0.0) last_positive = z;
      cum += theta.at(z);
      if (!found && u < cum && theta.at(z) > 0.0) {
        pick = z;
        found = true;
      }
    }
    if (!found) pick = last_positive;
    const EdgePattern z{pick};
    for (unsigned j = shape.k_max(); j-- > 0;)
      if (z.test(j)) work.push_back(a.child(j));
    nodes.emplace(std::move(a), z);
  }
  return RootedSubtree(std::move(nodes));
}

// product over the path edges (v', v'') of sum_{z: z_{v'v''} = 1} theta_v'(z)
inline double path_reach_prob(const TreeDistribution& dist, const NodeAddress& v) {
  if (!v.valid_for(dist.shape()))
    throw StructuralError("address " + v.to_string() + " is outside the base tree");
  double p = 1.0;
  const TreeShape& shape = dist.shape();
  NodeIndex n = 0;
  for (unsigned j : v.path()) {
    p *= dist.param_at(n).edge_marginal(j);
    n = shape.child_index(n, j);
  }
  return p;
}

// pattern_event_prob: Pr{(z_v^T = z) and (v in V_T)}.
inline double pattern_event_prob(const TreeDistribution& dist, const NodeAddress& v,
                                 EdgePattern z) {
  if (z.bits() >= dist.shape().pattern_count())
    throw StructuralError("pattern has bits beyond k_max");
  const double reach = path_reach_prob(dist, v);
  return dist.param(v)[z] * reach;
}

// Pr{v in V_T}
inline double node_prob(const TreeDistribution& dist, const NodeAddress& v) {
  return path_reach_prob(dist, v);
}

// Pr{((v_pa, v) in E_T) and (v_pa in V_T)}
inline double edge_prob(const TreeDistribution& dist, const NodeAddress& v) {
  const NodeAddress pa = parent(v);
  return path_reach_prob(dist, pa) * dist.param(pa).edge_marginal(v.path().back());
}

// Pr{v in L_T}
inline double leaf_prob(const TreeDistribution& dist, const NodeAddress& v) {
  return dist.param(v)[EdgePattern{}] * node_prob(dist, v);
}

// Pr{v in I_T}
inline double inner_prob(const TreeDistribution& dist, const NodeAddress& v) {
  return (1.0 - dist.param(v)[EdgePattern{}]) * node_prob(dist, v);
}

// Pr{z_v^T = z | v in V_T}
inline double conditional_pattern_prob(const TreeDistribution& dist, const NodeAddress& v,
                                       EdgePattern z) {
  if (!(node_prob(dist, v) > 0.0)) throw DomainError("conditioning event has probability zero");
  if (z.bits() >= dist.shape().pattern_count())
    throw StructuralError("pattern has bits beyond k_max");
  return dist.param(v)[z];
}

// Pr{(v_pa, v) in E_T | v_pa in V_T}
inline double conditional_edge_prob(const TreeDistribution& dist, const NodeAddress& v) {
  const NodeAddress pa = parent(v);
  if (!(node_prob(dist, pa) > 0.0)) throw DomainError("conditioning event has probability zero");
  return dist.param(pa).edge_marginal(v.path().back());
}

struct ModeResult {
  RootedSubtree tree;
  double probability = 0.0;
};

// mode: max-product recursion psi with per-node argmax flags, then a
// backtracking walk from the root. Ties go to the lexicographically smallest
// bit vector.
inline ModeResult mode(const TreeDistribution& dist, OpStats* stats = nullptr) {
  const TreeShape& shape = dist.shape();
  detail::require_recursable(shape);
  std::vector<std::uint32_t> best(shape.node_count(), 0);
  std::vector<double> prods(shape.pattern_count());
  const double top = detail::bottom_up(
      shape,
      [&](NodeIndex n, const NodeAddress&, std::span<const double> kids) {
        const NodeParam& theta = dist.param_at(n);
        if (kids.empty()) {
          if (stats) ++stats->pattern_evals;
          best[n] = 0;
          return theta.at(0);
        }
        detail::subset_products(kids, prods);
        double best_value = -1.0;
        std::uint32_t arg = 0;
        for (std::uint32_t z = 0; z < prods.size(); ++z) {
          if (stats) ++stats->pattern_evals;
          const double v = theta.at(z) * prods[z];
          if (v > best_value || (v == best_value && lex_less(EdgePattern{z}, EdgePattern{arg}))) {
            best_value = v;
            arg = z;
          }
        }
        best[n] = arg;
        return best_value;
      },
      stats);

  RootedSubtree::NodeMap nodes;
  std::vector<std::pair<NodeIndex, NodeAddress>> work{{0, NodeAddress::root()}};
  while (!work.empty()) {
    auto [n, a] = std::move(work.back());
    work.pop_back();
    const EdgePattern z{best[n]};
    for (unsigned j = shape.k_max(); j-- > 0;)
      if (z.test(j)) work.emplace_back(shape.child_index(n, j), a.child(j));
    nodes.emplace(std::move(a), z);
  }
  return {RootedSubtree(std::move(nodes)), top};
}

// expect_product: E[prod_{v in V_T} g_v(z_v^T)].
inline double expect_product(const TreeDistribution& dist, const NodeFunction& g,
                             OpStats* stats = nullptr) {
  return detail::sum_product(
      dist.shape(),
      [&](NodeIndex n, const NodeAddress& a, EdgePattern z) {
        const double t = dist.param_at(n)[z];
        if (t == 0.0) return 0.0;
        return t * g(a, z);
      },
      stats);
}

// expect_sum: E[sum_{v in V_T} g_v(z_v^T)]. g may be infinite where
// theta_v(z) = 0; those terms count as 0.
inline double expect_sum(const TreeDistribution& dist, const NodeFunction& g,
                         OpStats* stats = nullptr) {
  return detail::sum_form(
      dist, [&](NodeIndex, const NodeAddress& a, EdgePattern z) { return g(a, z); }, stats);
}

// entropy in nats.
inline double entropy(const TreeDistribution& dist, OpStats* stats = nullptr) {
  const double h = detail::sum_form(
      dist,
      [&](NodeIndex n, const NodeAddress&, EdgePattern z) {
        const double t = dist.param_at(n)[z];
        return t > 0.0 ? -std::log(t) : std::numeric_limits<double>::infinity();
      },
      stats);
  return std::max(h, 0.0);
}

// kl_divergence D(p || q) in nats. Throws DomainError naming (v, z)
// when q gives zero probability to a pattern p reaches with positive
// probability.
inline double kl_divergence(const TreeDistribution& p, const TreeDistribution& q,
                            OpStats* stats = nullptr) {
  if (!(p.shape() == q.shape())) throw StructuralError("KL divergence needs identical shapes");
  const TreeShape& shape = p.shape();
  detail::require_recursable(shape);
  std::vector<double> reach(shape.node_count(), 0.0);
  reach[0] = 1.0;
  for (NodeIndex n = 0; n < shape.node_count(); ++n) {
    const NodeParam& tp = p.param_at(n);
    const NodeParam& tq = q.param_at(n);
    if (reach[n] > 0.0)
      for (std::uint32_t z = 0; z < tp.size(); ++z)
        if (tp.at(z) > 0.0 && tq.at(z) == 0.0)
          throw DomainError("absolute continuity violated at node " +
                            NodeAddress::from_index(shape, n).to_string() + " pattern " +
                            EdgePattern{z}.to_string(shape.k_max()));
    if (!shape.is_leaf_index(n))
      for (unsigned j = 0; j < shape.k_max(); ++j)
        reach[shape.child_index(n, j)] = reach[n] * tp.edge_marginal(j);
  }
  const double d = detail::sum_form(
      p,
      [&](NodeIndex n, const NodeAddress&, EdgePattern z) {
        const double a = p.param_at(n)[z];
        const double b = q.param_at(n)[z];
        if (a == 0.0) return 0.0;
        if (b == 0.0) return std::numeric_limits<double>::infinity();
        return std::log(a / b);
      },
      stats);
  return std::max(d, 0.0);
}

}  // namespace roottree

#endif  // ROOTTREE_TREE_DIST_HPP
