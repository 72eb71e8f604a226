#ifndef ROOTTREE_VERIFY_HPP
#define ROOTTREE_VERIFY_HPP

// Oracle-equivalence suites: every recursion checked against brute-force
// enumeration on random instances of small shapes. Failing cases carry a
// replay block (suite, seed, shape, case and the serialized distribution).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "roottree/conjugacy.hpp"
#include "roottree/context_tree.hpp"
#include "roottree/codec.hpp"
#include "roottree/dist_io.hpp"
#include "roottree/oracle.hpp"
#include "roottree/random.hpp"
#include "roottree/tree_dist.hpp"

namespace roottree {

struct VerifyOptions {
  std::vector<std::string> scope;  // suite names or groups; empty = all
  std::uint64_t seed = 1;
  unsigned cases = 20;  // random instances per shape
  std::vector<TreeShape> shapes{TreeShape(2, 2), TreeShape(3, 2)};
  std::vector<TreeShape> normalization_shapes{TreeShape(1, 3), TreeShape(2, 1), TreeShape(2, 2),
                                              TreeShape(2, 3), TreeShape(3, 2)};
  double tolerance = 1e-10;
  // Adds 1e-3 to theta(0) at this node in every normalization instance.
  std::optional<NodeAddress> inject_fault;
};

struct VerifyFailure {
  std::string suite;
  std::string detail;
  std::string replay;
};

struct SuiteResult {
  std::string name;
  std::uint64_t checks = 0;
  std::uint64_t failed = 0;
  std::vector<VerifyFailure> failures;  // first few only
};

struct VerifyReport {
  std::vector<SuiteResult> suites;

  bool ok() const {
    return std::all_of(suites.begin(), suites.end(), [](const auto& s) { return s.failed == 0; });
  }

  std::string summary() const {
    std::string out;
    char buf[160];
    for (const auto& s : suites) {
      std::snprintf(buf, sizeof buf, "%-18s %s  %llu checks, %llu failed\n", s.name.c_str(),
                    s.failed == 0 ? "PASS" : "FAIL", static_cast<unsigned long long>(s.checks),
                    static_cast<unsigned long long>(s.failed));
      out += buf;
    }
    return out;
  }
};

inline const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names{
      "normalization", "marginals",         "mode",           "expectations", "entropy",
      "kl",            "posterior_general", "posterior_path", "dirichlet",    "sequential"};
  return names;
}

// Expands groups ("all", "posterior") and rejects unknown names. Keeps the
// canonical suite order.
inline std::vector<std::string> resolve_scope(const std::vector<std::string>& scope) {
  const auto& all = verify_suite_names();
  if (scope.empty()) return all;
  std::set<std::string> want;
  for (const auto& s : scope) {
    if (s == "all") {
      want.insert(all.begin(), all.end());
    } else if (s == "posterior") {
      want.insert({"posterior_general", "posterior_path", "dirichlet"});
    } else if (std::find(all.begin(), all.end(), s) != all.end()) {
      want.insert(s);
    } else {
      throw ConfigError("unknown verify scope '" + s + "'");
    }
  }
  std::vector<std::string> out;
  for (const auto& s : all)
    if (want.count(s)) out.push_back(s);
  return out;
}

namespace detail {

inline std::string fmt(double x) { return io::format_double(x); }

class SuiteRunner {
 public:
  SuiteRunner(const VerifyOptions& opt, std::string name, std::uint64_t suite_id)
      : opt_(opt), suite_id_(suite_id) {
    result_.name = std::move(name);
  }

  // Deterministic generator for (shape, case).
  Rng rng_for(const TreeShape& shape, std::uint64_t c) const {
    const std::uint64_t s = derive_seed(opt_.seed, suite_id_ * 1000 + shape.k_max() * 37 + shape.d_max());
    return Rng(derive_seed(s, c));
  }

  void begin_case(const TreeShape& shape, std::uint64_t c, std::string context) {
    shape_ = shape;
    case_ = c;
    context_ = std::move(context);
  }

  bool check(bool ok, const std::string& what) {
    ++result_.checks;
    if (ok) return true;
    ++result_.failed;
    if (result_.failures.size() < 10) {
      char head[200];
      std::snprintf(head, sizeof head, "# replay: suite=%s seed=%llu shape=%u,%u case=%llu\n",
                    result_.name.c_str(), static_cast<unsigned long long>(opt_.seed),
                    shape_.k_max(), shape_.d_max(), static_cast<unsigned long long>(case_));
      result_.failures.push_back({result_.name, what, head + context_});
    }
    return false;
  }

  bool near(double got, double want, const std::string& what, double tol) {
    const bool ok = std::abs(got - want) <= tol;
    return check(ok, what + ": got " + fmt(got) + ", expected " + fmt(want));
  }

  bool near(double got, double want, const std::string& what) {
    return near(got, want, what, opt_.tolerance);
  }

  bool near_rel(double got, double want, const std::string& what, double rel) {
    return near(got, want, what, rel * std::max(1.0, std::abs(want)));
  }

  SuiteResult take() { return std::move(result_); }
  const VerifyOptions& options() const { return opt_; }

 private:
  const VerifyOptions& opt_;
  std::uint64_t suite_id_;
  SuiteResult result_;
  TreeShape shape_{1, 1};
  std::uint64_t case_ = 0;
  std::string context_;
};

inline double zero_fraction_for(std::uint64_t c) { return c % 2 == 1 ? 0.25 : 0.0; }

inline std::vector<NodeAddress> all_addresses(const TreeShape& shape) {
  std::vector<NodeAddress> out;
  for (NodeIndex n = 0; n < shape.node_count(); ++n) out.push_back(NodeAddress::from_index(shape, n));
  return out;
}

inline std::uint64_t expected_pattern_evals(const TreeShape& s) {
  return s.inner_count() * s.pattern_count() + s.leaf_count();
}

inline void suite_normalization(SuiteRunner& r) {
  const auto& opt = r.options();
  for (const TreeShape& shape : opt.normalization_shapes)
    for (std::uint64_t c = 0; c < opt.cases; ++c) {
      Rng rng = r.rng_for(shape, c);
      TreeDistribution dist = random_distribution(shape, rng, zero_fraction_for(c));
      if (opt.inject_fault && opt.inject_fault->valid_for(shape)) {
        const NodeParam& p = dist.param(*opt.inject_fault);
        std::vector<double> probs(p.probs().begin(), p.probs().end());
        probs[0] += 1e-3;
        dist = dist.with_unchecked_param(*opt.inject_fault, std::move(probs));
      }
      r.begin_case(shape, c, io::write_distribution(dist));
      const NormalizationReport rep = check_normalization(dist, 1e-12);
      if (rep.node_fault)
        r.check(false, "node " + rep.first_bad_node.to_string() + " pattern probabilities sum to " +
                           fmt(rep.first_bad_sum));
      else
        r.near(rep.total, 1.0, "total mass", 1e-12);
      const auto tab = oracle::table(dist);
      r.near(oracle::total(tab), 1.0, "enumerated total mass");
    }
}

inline void suite_marginals(SuiteRunner& r) {
  const auto& opt = r.options();
  for (const TreeShape& shape : opt.shapes)
    for (std::uint64_t c = 0; c < opt.cases; ++c) {
      Rng rng = r.rng_for(shape, c);
      const TreeDistribution dist = random_distribution(shape, rng, zero_fraction_for(c));
      r.begin_case(shape, c, io::write_distribution(dist));
      const auto tab = oracle::table(dist);
      for (const NodeAddress& v : all_addresses(shape)) {
        const std::string at = " at " + v.to_string();
        const double np = oracle::node_prob(tab, v);
        r.near(node_prob(dist, v), np, "node_prob" + at);
        r.near(leaf_prob(dist, v), oracle::leaf_prob(tab, v), "leaf_prob" + at);
        r.near(inner_prob(dist, v), oracle::inner_prob(tab, v), "inner_prob" + at);
        for (std::uint32_t z = 0; z < shape.pattern_count(); ++z) {
          const EdgePattern p{z};
          const std::string atz = at + " pattern " + p.to_string(shape.k_max());
          const double pe = oracle::pattern_event_prob(tab, v, p);
          r.near(pattern_event_prob(dist, v, p), pe, "pattern_event_prob" + atz);
          if (np > 0.0) {
            r.near(conditional_pattern_prob(dist, v, p), pe / np, "conditional_pattern_prob" + atz);
          } else {
            bool threw = false;
            try {
              conditional_pattern_prob(dist, v, p);
            } catch (const DomainError&) {
              threw = true;
            }
            r.check(threw, "conditional_pattern_prob" + atz + " should reject a null condition");
          }
        }
        if (v.is_root()) continue;
        const double ep = oracle::edge_prob(tab, v);
        r.near(edge_prob(dist, v), ep, "edge_prob" + at);
        const double pp = oracle::node_prob(tab, parent(v));
        if (pp > 0.0) r.near(conditional_edge_prob(dist, v), ep / pp, "conditional_edge_prob" + at);
      }
    }
}

inline void suite_mode(SuiteRunner& r) {
  const auto& opt = r.options();
  for (const TreeShape& shape : opt.shapes)
    for (std::uint64_t c = 0; c < opt.cases; ++c) {
      Rng rng = r.rng_for(shape, c);
      const TreeDistribution dist = random_distribution(shape, rng, zero_fraction_for(c));
      r.begin_case(shape, c, io::write_distribution(dist));
      OpStats stats;
      const ModeResult m = mode(dist, &stats);
      const double best = oracle::max_prob(oracle::table(dist));
      r.near(m.probability, best, "mode probability", 1e-12 * best);
      r.near(oracle::direct_prob(dist, m.tree), best, "probability of the mode tree", 1e-12 * best);
      r.check(stats.nodes_visited == shape.node_count(), "mode visited " +
                                                             std::to_string(stats.nodes_visited) +
                                                             " nodes");
      r.check(stats.pattern_evals == expected_pattern_evals(shape),
              "mode evaluated " + std::to_string(stats.pattern_evals) + " node-patterns");
    }
}

inline void suite_expectations(SuiteRunner& r) {
  const auto& opt = r.options();
  for (const TreeShape& shape : opt.shapes)
    for (std::uint64_t c = 0; c < opt.cases; ++c) {
      Rng rng = r.rng_for(shape, c);
      const TreeDistribution dist = random_distribution(shape, rng, zero_fraction_for(c));
      const RandomNodeTable gp(shape, rng, 0.5, 1.5);
      const RandomNodeTable gs(shape, rng, -1.0, 1.0);
      r.begin_case(shape, c, io::write_distribution(dist));
      const auto tab = oracle::table(dist);
      OpStats sp, ss, sg;
      r.near(expect_product(dist, gp, &sp), oracle::product_expectation(tab, gp), "expect_product");
      r.near(expect_sum(dist, gs, &ss), oracle::sum_expectation(tab, gs), "expect_sum");
      const NodeFunction theta = [&](const NodeAddress& a, EdgePattern z) { return dist.param(a)[z]; };
      r.near(generic_sum(shape, theta, &sg), 1.0, "generic_sum of theta", 1e-12);
      for (const OpStats* s : {&sp, &ss, &sg})
        r.check(s->pattern_evals == expected_pattern_evals(shape),
                "recursion evaluated " + std::to_string(s->pattern_evals) + " node-patterns");
      const NodeFunction one = [](const NodeAddress&, EdgePattern) { return 1.0; };
      r.check(generic_sum(shape, one) == static_cast<double>(subtree_count(shape)),
              "generic_sum of 1 differs from the subtree count");
    }
}

inline void suite_entropy(SuiteRunner& r) {
  const auto& opt = r.options();
  for (const TreeShape& shape : opt.shapes)
    for (std::uint64_t c = 0; c < opt.cases; ++c) {
      Rng rng = r.rng_for(shape, c);
      const TreeDistribution dist = random_distribution(shape, rng, zero_fraction_for(c));
      r.begin_case(shape, c, io::write_distribution(dist));
      const double h = entropy(dist);
      r.near(h, oracle::entropy(oracle::table(dist)), "entropy");
      r.check(h >= 0.0 && h <= std::log(static_cast<double>(subtree_count(shape))) + 1e-12,
              "entropy " + fmt(h) + " outside [0, log |T|]");
    }
}

inline void suite_kl(SuiteRunner& r) {
  const auto& opt = r.options();
  for (const TreeShape& shape : opt.shapes)
    for (std::uint64_t c = 0; c < opt.cases; ++c) {
      Rng rng = r.rng_for(shape, c);
      const TreeDistribution p = random_distribution(shape, rng, 0.25);
      const TreeDistribution q = random_distribution(shape, rng, c % 2 == 1 ? 0.1 : 0.0);
      r.begin_case(shape, c, io::write_distribution(p) + io::write_distribution(q));
      const double want = oracle::kl(oracle::table(p), oracle::table(q));
      std::optional<double> got;
      try {
        got = kl_divergence(p, q);
      } catch (const DomainError&) {
      }
      if (std::isinf(want))
        r.check(!got, "kl_divergence should reject a support violation");
      else if (r.check(got.has_value(), "kl_divergence rejected a finite divergence"))
        r.near(*got, want, "kl_divergence");
      r.near(kl_divergence(p, p), 0.0, "kl_divergence(p, p)");
    }
}

// Per-tree posterior probability check shared by both posterior suites.
inline void compare_posterior(SuiteRunner& r, const std::vector<oracle::WeightedTree>& prior,
                              const oracle::BrutePosterior& brute, const Posterior& post,
                              const std::string& label) {
  r.near_rel(post.evidence, brute.evidence, label + " evidence", r.options().tolerance);
  for (std::size_t i = 0; i < prior.size(); ++i)
    if (!r.near(oracle::direct_prob(post.dist, prior[i].tree), brute.post[i],
                label + " probability of tree #" + std::to_string(i)))
      break;
  const NormalizationReport norm = check_normalization(post.dist, 1e-12);
  r.check(norm.ok, label + " is not normalized (total " + fmt(norm.total) + ")");
}

inline void suite_posterior_general(SuiteRunner& r) {
  const auto& opt = r.options();
  for (const TreeShape& shape : opt.shapes)
    for (std::uint64_t c = 0; c < opt.cases; ++c) {
      Rng rng = r.rng_for(shape, c);
      const TreeDistribution prior = random_distribution(shape, rng, zero_fraction_for(c));
      const RandomNodeTable g(shape, rng, 0.1, 2.0);
      r.begin_case(shape, c, io::write_distribution(prior));
      const auto tab = oracle::table(prior);
      const Posterior post = tree_posterior_general(prior, g);
      compare_posterior(r, tab, oracle::posterior(tab, g), post, "general posterior");
      r.near_rel(post.evidence, expect_product(prior, g), "evidence vs expect_product", 1e-12);
    }
}

inline void suite_posterior_path(SuiteRunner& r) {
  const auto& opt = r.options();
  for (const TreeShape& shape : opt.shapes)
    for (std::uint64_t c = 0; c < opt.cases; ++c) {
      Rng rng = r.rng_for(shape, c);
      const TreeDistribution prior = random_distribution(shape, rng, zero_fraction_for(c));
      PathLikelihood lik;
      std::vector<unsigned> path(shape.d_max());
      for (unsigned& j : path) j = static_cast<unsigned>(rng() % shape.k_max());
      lik.target = NodeAddress(path);
      for (unsigned t = 0; t <= shape.d_max(); ++t) lik.node_values.push_back(0.1 + 1.9 * uniform01(rng));
      std::string ctx = io::write_distribution(prior) + "# target " + lik.target.to_string() + " values";
      for (double v : lik.node_values) ctx += " " + fmt(v);
      r.begin_case(shape, c, ctx + "\n");

      const auto tab = oracle::table(prior);
      const NodeFunction g = lik.as_node_function();
      OpStats stats;
      const Posterior fast = tree_posterior_path(prior, lik, &stats);
      compare_posterior(r, tab, oracle::posterior(tab, g), fast, "path posterior");
      const Posterior slow = tree_posterior_general(prior, g);
      r.near_rel(fast.evidence, slow.evidence, "path vs general evidence", 1e-12);
      for (NodeIndex n = 0; n < shape.inner_count(); ++n) {
        const NodeAddress a = NodeAddress::from_index(shape, n);
        const NodeParam& pf = fast.dist.param_at(n);
        const NodeParam& ps = slow.dist.param_at(n);
        // Only nodes reachable a posteriori carry a determined parameter.
        if (node_prob(slow.dist, a) > 0.0)
          for (std::size_t z = 0; z < pf.size(); ++z)
            r.near(pf.at(z), ps.at(z), "theta at " + a.to_string() + " index " + std::to_string(z));
        if (!a.is_prefix_of(lik.target))
          r.check(pf == prior.param_at(n), "off-path node " + a.to_string() + " changed");
      }
      r.check(stats.nodes_visited == shape.d_max() + 1u,
              "path update visited " + std::to_string(stats.nodes_visited) + " nodes");
    }
}

inline void suite_dirichlet(SuiteRunner& r) {
  const auto& opt = r.options();
  for (const TreeShape& shape : opt.shapes)
    for (std::uint64_t c = 0; c < opt.cases; ++c) {
      Rng rng = r.rng_for(shape, c);
      const TreeDistribution dist = random_distribution(shape, rng, zero_fraction_for(c));
      std::vector<RootedSubtree> trees;
      std::string ctx;
      for (int i = 0; i < 5; ++i) {
        trees.push_back(sample(dist, rng));
        ctx += "# tree " + std::to_string(i) + "\n" + trees.back().to_text(shape.k_max());
      }
      r.begin_case(shape, c, ctx);
      const DirichletHyper prior(shape, 0.5 + uniform01(rng));
      const DirichletHyper batch = dirichlet_posterior(prior, trees);
      std::vector<std::size_t> order(trees.size());
      std::iota(order.begin(), order.end(), 0);
      while (std::next_permutation(order.begin(), order.end())) {
        DirichletHyper seq = prior;
        for (std::size_t i : order) seq = dirichlet_posterior(seq, trees[i]);
        if (!r.check(seq == batch, "update order changed the posterior")) break;
      }
      double added = 0.0, expected = 0.0;
      for (const auto& t : trees) expected += static_cast<double>(t.size());
      for (const NodeAddress& a : all_addresses(shape))
        for (double x : batch.alpha(a)) added += x - prior.default_alpha();
      r.check(added == expected, "total increment " + fmt(added) + " != " + fmt(expected));
    }
}

inline void suite_sequential(SuiteRunner& r) {
  const auto& opt = r.options();
  const TreeShape shape(2, 2);
  for (std::uint64_t c = 0; c < opt.cases; ++c) {
    Rng rng = r.rng_for(shape, c);
    const std::size_t n = 1 + rng() % 8;
    std::vector<Symbol> x(n);
    for (Symbol& s : x) s = static_cast<Symbol>(rng() % 2);
    const PriorRule rule = c % 2 == 0 ? PriorRule::uniform() : PriorRule::full_tree(0.5);
    const ModelConfig config{shape, static_cast<Symbol>(c % 3 == 2 ? 1 : 0), rule};
    std::string ctx = "# prior " + rule.name() + " padding " + std::to_string(config.padding) + " sequence";
    for (Symbol s : x) ctx += " " + std::to_string(s);
    r.begin_case(shape, c, ctx + "\n");

    ContextTreeModel model(config);
    double product = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto pred = model.predictive_distribution(x, i + 1);
      double sum = 0.0;
      for (double p : pred) sum += p;
      r.near(sum, 1.0, "predictive sum", 1e-12);
      const double e = model.update(x, i + 1, x[i]);
      r.near(e, pred[x[i]], "evidence vs predictive", 1e-12);
      product *= e;
    }
    const double joint = oracle::context_joint(config, x);
    r.near(product, joint, "product of evidences", 1e-9 * joint);
    r.near(ideal_codelength(config, x), -std::log2(joint), "ideal codelength", 1e-9);
  }
}

}  // namespace detail

inline VerifyReport run_verify(const VerifyOptions& opt) {
  const auto suites = resolve_scope(opt.scope);
  using Fn = void (*)(detail::SuiteRunner&);
  const std::vector<std::pair<std::string, Fn>> table{
      {"normalization", detail::suite_normalization},
      {"marginals", detail::suite_marginals},
      {"mode", detail::suite_mode},
      {"expectations", detail::suite_expectations},
      {"entropy", detail::suite_entropy},
      {"kl", detail::suite_kl},
      {"posterior_general", detail::suite_posterior_general},
      {"posterior_path", detail::suite_posterior_path},
      {"dirichlet", detail::suite_dirichlet},
      {"sequential", detail::suite_sequential},
  };
  VerifyReport report;
  for (std::size_t id = 0; id < table.size(); ++id) {
    const auto& [name, fn] = table[id];
    if (std::find(suites.begin(), suites.end(), name) == suites.end()) continue;
    detail::SuiteRunner runner(opt, name, id);
    try {
      fn(runner);
    } catch (const std::exception& e) {
      runner.check(false, std::string("unexpected exception: ") + e.what());
    }
    report.suites.push_back(runner.take());
  }
  return report;
}

}  // namespace roottree

#endif  // ROOTTREE_VERIFY_HPP
