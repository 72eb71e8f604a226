#ifndef ROOTTREE_CONTEXT_TREE_HPP
#define ROOTTREE_CONTEXT_TREE_HPP

// Generalized context-tree source: base-tree nodes are contexts (most recent
// symbol first), the deepest tree node on the current context path emits the
// next symbol, and each node's emission law is Dirichlet(1/2, ..., 1/2).
// The Bayes mixture over all trees is maintained by sequential path
// posterior updates.
//
// Counts are kept at every context-path node, split by the child the context
// continues into. Under pattern z an inner node v only emits for contexts
// whose next child is absent from z, so its compound predictive uses the
// counts of those children only. For full trees this is the usual
// all-data-through-v count; for generalized trees it keeps the mixture equal
// to the marginal of the generating process.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "roottree/base_tree.hpp"
#include "roottree/conjugacy.hpp"
#include "roottree/error.hpp"
#include "roottree/tree_dist.hpp"

namespace roottree {

using Symbol = std::uint8_t;

// Prior over trees used by the sequential model and the codec.
struct PriorRule {
  enum class Kind : std::uint8_t { uniform = 0, full_tree = 1 };
  Kind kind = Kind::uniform;
  double alpha = 0.5;  // full_tree only

  static PriorRule uniform() { return {Kind::uniform, 0.5}; }
  static PriorRule full_tree(double alpha = 0.5) { return {Kind::full_tree, alpha}; }

  TreeDistribution distribution(const TreeShape& shape) const {
    if (kind == Kind::full_tree) return TreeDistribution::full_tree(shape, alpha);
    return TreeDistribution::uniform(shape);
  }

  std::string name() const {
    if (kind == Kind::uniform) return "uniform";
    char buf[64];
    std::snprintf(buf, sizeof buf, "full_tree(alpha=%g)", alpha);
    return buf;
  }

  friend bool operator==(const PriorRule& a, const PriorRule& b) {
    return a.kind == b.kind && (a.kind == Kind::uniform || a.alpha == b.alpha);
  }
};

struct ModelConfig {
  TreeShape shape{2, 1};
  Symbol padding = 0;
  PriorRule prior;
};

// context_of: address whose j-th index (from the root) is x_{i-1-j},
// positions before the start replaced by `padding`. `i` is 1-based and
// history[0] is x_1.
inline NodeAddress context_of(std::span<const Symbol> history, std::size_t i, unsigned d_max,
                              Symbol padding = 0) {
  if (i < 1) throw DomainError("positions are 1-based");
  std::vector<unsigned> path(d_max);
  for (unsigned j = 0; j < d_max; ++j) {
    const std::size_t back = j + 1;  // x_{i - back}
    if (i > back) {
      const std::size_t pos = i - back - 1;
      if (pos >= history.size()) throw DomainError("history is shorter than the position");
      path[j] = history[pos];
    } else {
      path[j] = padding;
    }
  }
  return NodeAddress(std::move(path));
}

class ContextTreeModel {
 public:
  explicit ContextTreeModel(const ModelConfig& config)
      : config_(config), dist_(config.prior.distribution(config.shape)) {
    if (config.padding >= config.shape.k_max())
      throw DomainError("padding symbol must be below k_max");
  }

  const ModelConfig& config() const noexcept { return config_; }
  const TreeShape& shape() const noexcept { return config_.shape; }
  const TreeDistribution& tree_dist() const noexcept { return dist_; }
  std::uint64_t processed() const noexcept { return processed_; }

  // Symbol counts of every past position whose context passed through v.
  std::vector<std::uint32_t> counts(const NodeAddress& v) const {
    const unsigned k = shape().k_max();
    std::vector<std::uint32_t> out(k, 0);
    auto it = counts_.find(v.index(shape()));
    if (it == counts_.end()) return out;
    for (std::size_t i = 0; i < it->second.size(); ++i) out[i % k] += it->second[i];
    return out;
  }

  // Raw count vectors by heap index: k*k entries (row = next child) below
  // max depth, k entries at max depth. Nodes without counts are absent.
  const std::unordered_map<NodeIndex, std::vector<std::uint32_t>>& raw_counts() const noexcept {
    return counts_;
  }

  // node_predictive: (n_{v,a} + 1/2) / (n_v + k/2) over all of v's counts.
  double node_predictive(const NodeAddress& v, Symbol a) const {
    return masked_predictive(v.index(shape()), all_children(), a);
  }

  // Emission predictive of v when its pattern is z: counts restricted to
  // the children absent from z.
  double pattern_predictive(const NodeAddress& v, EdgePattern z, Symbol a) const {
    return masked_predictive(v.index(shape()), all_children() & ~z.bits(), a);
  }

  // predictive_distribution: Bayes mixture p*(x_i = a | x^{i-1}) for
  // every symbol a.
  std::vector<double> predictive_distribution(std::span<const Symbol> history,
                                              std::size_t i) const {
    check_position(i);
    const NodeAddress ctx = context_of(history, i, shape().d_max(), config_.padding);
    const unsigned k = shape().k_max();
    const unsigned d = shape().d_max();
    std::vector<NodeIndex> path(d + 1);
    path[0] = 0;
    for (unsigned t = 0; t < d; ++t) path[t + 1] = shape().child_index(path[t], ctx[t]);

    std::vector<double> q(k);
    for (unsigned a = 0; a < k; ++a) q[a] = masked_predictive(path[d], all_children(), static_cast<Symbol>(a));
    std::vector<double> stop(k);
    for (unsigned t = d; t-- > 0;) {
      const NodeParam& theta = dist_.param_at(path[t]);
      const unsigned j = ctx[t];
      double on = 0.0;
      std::fill(stop.begin(), stop.end(), 0.0);
      for (std::uint32_t z = 0; z < theta.size(); ++z) {
        const double w = theta.at(z);
        if ((z >> j) & 1u) {
          on += w;
        } else if (w != 0.0) {
          const MaskedCounts mc = masked(path[t], all_children() & ~z);
          for (unsigned a = 0; a < k; ++a) stop[a] += w * mc.predictive(a, k);
        }
      }
      for (unsigned a = 0; a < k; ++a) q[a] = stop[a] + on * q[a];
    }
    return q;
  }

  // update: posterior path update for the observed symbol, then count
  // increments along the context path. Returns the evidence, which is the
  // predictive probability of `observed`.
  double update(std::span<const Symbol> history, std::size_t i, Symbol observed) {
    check_position(i);
    if (observed >= shape().k_max())
      throw DomainError("symbol " + std::to_string(observed) + " is outside the alphabet");
    const NodeAddress ctx = context_of(history, i, shape().d_max(), config_.padding);
    const unsigned d = shape().d_max();
    const unsigned k = shape().k_max();
    std::vector<NodeIndex> path(d + 1);
    path[0] = 0;
    for (unsigned t = 0; t < d; ++t) path[t + 1] = shape().child_index(path[t], ctx[t]);
    const double evidence = detail::apply_path_posterior_with(
        dist_, ctx,
        [&](unsigned t, EdgePattern z) {
          return masked_predictive(path[t], all_children() & ~z.bits(), observed);
        },
        nullptr);
    for (unsigned t = 0; t <= d; ++t) {
      auto& c = counts_[path[t]];
      if (c.empty()) c.assign(t < d ? k * k : k, 0);
      ++c[t < d ? ctx[t] * k + observed : observed];
    }
    ++processed_;
    return evidence;
  }

  // Restores a checkpointed state.
  void restore(TreeDistribution dist, std::unordered_map<NodeIndex, std::vector<std::uint32_t>> counts,
               std::uint64_t processed) {
    if (!(dist.shape() == shape())) throw StructuralError("checkpoint shape mismatch");
    const unsigned k = shape().k_max();
    for (const auto& [n, c] : counts) {
      if (n >= shape().node_count()) throw StructuralError("checkpoint counts do not fit the base tree");
      if (c.size() != (shape().is_leaf_index(n) ? k : k * k))
        throw StructuralError("checkpoint count vector has the wrong length");
    }
    dist_ = std::move(dist);
    counts_ = std::move(counts);
    processed_ = processed;
  }

 private:
  struct MaskedCounts {
    const std::uint32_t* row = nullptr;  // per-child rows, or the leaf vector
    unsigned rows = 0;
    std::uint32_t mask = 0;
    double total = 0.0;

    double count(unsigned a, unsigned k) const {
      double c = 0.0;
      for (unsigned j = 0; j < rows; ++j)
        if ((mask >> j) & 1u) c += row[j * k + a];
      return c;
    }
    double predictive(unsigned a, unsigned k) const {
      return (count(a, k) + 0.5) / (total + k / 2.0);
    }
  };

  std::uint32_t all_children() const { return (1u << shape().k_max()) - 1u; }

  MaskedCounts masked(NodeIndex n, std::uint32_t mask) const {
    MaskedCounts mc;
    auto it = counts_.find(n);
    if (it == counts_.end()) return mc;
    const unsigned k = shape().k_max();
    mc.row = it->second.data();
    mc.rows = shape().is_leaf_index(n) ? 1 : k;
    mc.mask = shape().is_leaf_index(n) ? 1u : mask;
    for (unsigned j = 0; j < mc.rows; ++j)
      if ((mc.mask >> j) & 1u)
        for (unsigned a = 0; a < k; ++a) mc.total += mc.row[j * k + a];
    return mc;
  }

  double masked_predictive(NodeIndex n, std::uint32_t mask, Symbol a) const {
    return masked(n, mask).predictive(a, shape().k_max());
  }

  void check_position(std::size_t i) const {
    if (i != processed_ + 1)
      throw DomainError("model has processed " + std::to_string(processed_) +
                        " symbols; cannot handle position " + std::to_string(i));
  }

  ModelConfig config_;
  TreeDistribution dist_;
  std::unordered_map<NodeIndex, std::vector<std::uint32_t>> counts_;
  std::uint64_t processed_ = 0;
};

// Per-position ideal code lengths -log2 p*(x_i | x^{i-1}), i = 1..n.
inline std::vector<double> symbol_codelengths(const ModelConfig& config,
                                              std::span<const Symbol> seq) {
  ContextTreeModel model(config);
  std::vector<double> bits(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] >= config.shape.k_max())
      throw DomainError("symbol " + std::to_string(seq[i]) + " at position " +
                        std::to_string(i) + " is outside the alphabet");
    bits[i] = -std::log2(model.update(seq, i + 1, seq[i]));
  }
  return bits;
}

// A sampled generalized context-tree source.
struct SyntheticSource {
  ModelConfig config;
  RootedSubtree tree;
  std::vector<std::vector<double>> eta;  // per heap index

  // Deepest tree node on the context path.
  NodeIndex emitting_node(const NodeAddress& ctx) const {
    const TreeShape& shape = config.shape;
    NodeIndex n = 0;
    NodeAddress a;
    for (unsigned t = 0; t < shape.d_max(); ++t) {
      const auto z = tree.pattern(a);
      if (!z || !z->test(ctx[t])) break;
      a = a.child(ctx[t]);
      n = shape.child_index(n, ctx[t]);
    }
    return n;
  }
};

// Draws x_i ~ Cat(eta at the deepest tree node on the context path).
class SourceGenerator {
 public:
  SourceGenerator(std::shared_ptr<const SyntheticSource> source, std::uint64_t seed)
      : source_(std::move(source)), rng_(seed) {}

  Symbol next() {
    const auto& cfg = source_->config;
    const NodeAddress ctx =
        context_of(history_, history_.size() + 1, cfg.shape.d_max(), cfg.padding);
    const auto& eta = source_->eta[source_->emitting_node(ctx)];
    const double u = uniform01(rng_);
    double cum = 0.0;
    Symbol s = static_cast<Symbol>(eta.size() - 1);
    for (std::size_t a = 0; a < eta.size(); ++a) {
      cum += eta[a];
      if (u < cum) {
        s = static_cast<Symbol>(a);
        break;
      }
    }
    history_.push_back(s);
    return s;
  }

  std::vector<Symbol> take(std::size_t n) {
    std::vector<Symbol> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

  const SyntheticSource& source() const noexcept { return *source_; }

 private:
  std::shared_ptr<const SyntheticSource> source_;
  Rng rng_;
  std::vector<Symbol> history_;
};

// Dirichlet(1/2, ..., 1/2) draw.
inline std::vector<double> sample_symmetric_dirichlet(Rng& rng, unsigned k, double conc = 0.5) {
  std::gamma_distribution<double> gamma(conc, 1.0);
  std::vector<double> out(k);
  double sum = 0.0;
  for (double& x : out) {
    x = gamma(rng);
    sum += x;
  }
  if (!(sum > 0.0)) {
    // every gamma draw underflowed; put the mass on one symbol
    std::fill(out.begin(), out.end(), 0.0);
    out[rng() % k] = 1.0;
    return out;
  }
  for (double& x : out) x /= sum;
  return out;
}

// sample_source: tau from `tree_prior`, eta_v ~ Dir(1/2, ..., 1/2) for
// every base-tree node, and a generator for the symbol sequence.
inline SourceGenerator sample_source(const ModelConfig& config, const TreeDistribution& tree_prior,
                                     std::uint64_t seed) {
  detail::require_recursable(config.shape);
  Rng rng(seed);
  auto src = std::make_shared<SyntheticSource>();
  src->config = config;
  src->tree = sample(tree_prior, rng);
  src->eta.resize(config.shape.node_count());
  for (auto& e : src->eta) e = sample_symmetric_dirichlet(rng, config.shape.k_max());
  return SourceGenerator(std::move(src), rng());
}

}  // namespace roottree

#endif  // ROOTTREE_CONTEXT_TREE_HPP
