#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>

#include "roottree/oracle.hpp"
#include "roottree/random.hpp"
#include "roottree/tree_dist.hpp"

using namespace roottree;

namespace {

constexpr double kTol = 1e-10;

TreeDistribution root_heavy(const TreeShape& s) {
  // theta_root(0) = 0.6, rest spread; children uniform.
  std::vector<double> root(s.pattern_count(), 0.4 / (s.pattern_count() - 1));
  root[0] = 0.6;
  return TreeDistribution::uniform(s).with_param(NodeAddress::root(),
                                                 NodeParam::from_probs(root, s.k_max()));
}

std::uint64_t expected_evals(const TreeShape& s) {
  return s.inner_count() * s.pattern_count() + s.leaf_count();
}

}  // namespace

TEST(NodeParam, ValidationAndRenormalization) {
  EXPECT_THROW(NodeParam::from_probs({0.5, 0.5}, 2), StructuralError);
  EXPECT_THROW(NodeParam::from_probs({0.5, 0.5, 0.1, -0.1}, 2), DomainError);
  EXPECT_THROW(NodeParam::from_probs({0.5, 0.5, 0.1, 0.0}, 2), DomainError);
  EXPECT_THROW(NodeParam::from_probs({0.5, NAN, 0.5, 0.0}, 2), DomainError);
  const NodeParam p = NodeParam::from_probs({0.25, 0.25, 0.25, 0.25 + 5e-10}, 2);
  EXPECT_DOUBLE_EQ(p.sum(), 1.0);
  EXPECT_NEAR(p.edge_marginal(0), 0.5, 1e-9);
}

TEST(TreeDistribution, DefaultsAndOverrides) {
  const TreeShape s(2, 2);
  const auto u = TreeDistribution::uniform(s);
  EXPECT_DOUBLE_EQ(u.param(NodeAddress({1}))[EdgePattern{3}], 0.25);
  EXPECT_DOUBLE_EQ(u.param(NodeAddress({1, 0}))[EdgePattern{0}], 1.0);
  const auto f = TreeDistribution::full_tree(s, 0.3);
  EXPECT_DOUBLE_EQ(f.param(NodeAddress::root())[EdgePattern{3}], 0.3);
  EXPECT_DOUBLE_EQ(f.param(NodeAddress::root())[EdgePattern{0}], 0.7);
  EXPECT_THROW(u.with_param(NodeAddress({0, 0}), NodeParam::uniform(2)), DomainError);
  EXPECT_THROW(TreeDistribution(s, ExplicitRule{}), StructuralError);
}

TEST(LogProb, RootOnlyAndZeroFactor) {
  const TreeShape s(2, 2);
  const auto d = root_heavy(s);
  EXPECT_NEAR(log_prob(d, RootedSubtree::root_only()), std::log(0.6), 1e-15);
  const auto z = d.with_param(NodeAddress::root(), NodeParam::point_mass(2, EdgePattern{}));
  EXPECT_EQ(log_prob(z, RootedSubtree::parse_text("-:10\n0:00", 2)),
            -std::numeric_limits<double>::infinity());
  EXPECT_THROW(log_prob(d, RootedSubtree::parse_text("-:10", 2)), StructuralError);
}

// Full-tree rule: product of alpha over inner nodes and (1 - alpha) over
// leaves above maximum depth.
TEST(LogProb, FullTreeRule) {
  const TreeShape s(2, 3);
  const double alpha = 0.35;
  const auto d = TreeDistribution::full_tree(s, alpha);
  for (const auto& t : enumerate_subtrees(s)) {
    bool full = true;
    std::size_t inner = 0, shallow_leaves = 0;
    for (const auto& [a, z] : t.nodes()) {
      if (!z.is_zero() && z != EdgePattern::all(2)) full = false;
      if (!z.is_zero()) ++inner;
      if (z.is_zero() && a.depth() < s.d_max()) ++shallow_leaves;
    }
    const double want = full ? std::pow(alpha, inner) * std::pow(1 - alpha, shallow_leaves) : 0.0;
    EXPECT_NEAR(prob(d, t), want, 1e-15);
  }
}

TEST(GenericSum, Examples) {
  const NodeFunction one = [](const NodeAddress&, EdgePattern) { return 1.0; };
  EXPECT_DOUBLE_EQ(generic_sum(TreeShape(2, 2), one), 25.0);
  EXPECT_DOUBLE_EQ(generic_sum(TreeShape(3, 2), one), 729.0);

  Rng rng(7);
  const TreeShape s(2, 1);
  const auto d = random_distribution(s, rng);
  const double c = 1.7;
  const NodeFunction g = [&](const NodeAddress& a, EdgePattern z) { return d.param(a)[z] * c; };
  double brute = 0.0;
  for (const auto& t : enumerate_subtrees(s)) brute += prob(d, t) * std::pow(c, t.size());
  EXPECT_NEAR(generic_sum(s, g), brute, kTol);
}

TEST(Normalization, RandomDistributions) {
  Rng rng(11);
  for (auto s : {TreeShape(1, 3), TreeShape(2, 1), TreeShape(2, 2), TreeShape(2, 3), TreeShape(3, 2),
                 TreeShape(4, 3)})
    for (int i = 0; i < 20; ++i) {
      const auto d = random_distribution(s, rng, i % 2 ? 0.3 : 0.0);
      const auto rep = check_normalization(d);
      EXPECT_TRUE(rep.ok);
      EXPECT_NEAR(rep.total, 1.0, 1e-12);
    }
  EXPECT_NEAR(total_mass(TreeDistribution::uniform(TreeShape(4, 5))), 1.0, 1e-12);
}

TEST(Normalization, FaultInjectionNamesTheNode) {
  const TreeShape s(2, 2);
  const auto d = TreeDistribution::uniform(s).with_unchecked_param(NodeAddress({1}),
                                                                   {0.25, 0.25, 0.25, 0.26});
  const auto rep = check_normalization(d);
  EXPECT_FALSE(rep.ok);
  EXPECT_TRUE(rep.node_fault);
  EXPECT_EQ(rep.first_bad_node, NodeAddress({1}));
}

TEST(Complexity, CountersMatchNodePatternPairs) {
  Rng rng(3);
  for (auto s : {TreeShape(2, 2), TreeShape(3, 3), TreeShape(4, 5), TreeShape(1, 4)}) {
    const auto d = random_distribution(s, rng);
    const RandomNodeTable g(s, rng, 0.5, 1.5);
    OpStats a, b, c, e;
    generic_sum(s, g, &a);
    mode(d, &b);
    expect_product(d, g, &c);
    expect_sum(d, g, &e);
    for (const OpStats* st : {&a, &b, &c, &e}) {
      EXPECT_EQ(st->pattern_evals, expected_evals(s));
      EXPECT_EQ(st->nodes_visited, s.node_count());
    }
  }
}

TEST(Marginals, ClosedFormsAndIdentities) {
  const TreeShape s(2, 2);
  Rng rng(5);
  const auto d = random_distribution(s, rng);
  EXPECT_DOUBLE_EQ(node_prob(d, NodeAddress::root()), 1.0);
  for (std::uint32_t z = 0; z < 4; ++z)
    EXPECT_DOUBLE_EQ(pattern_event_prob(d, NodeAddress::root(), EdgePattern{z}),
                     d.param(NodeAddress::root())[EdgePattern{z}]);
  for (NodeIndex n = 0; n < s.node_count(); ++n) {
    const auto v = NodeAddress::from_index(s, n);
    EXPECT_NEAR(leaf_prob(d, v) + inner_prob(d, v), node_prob(d, v), 1e-15);
    if (v.depth() == s.d_max()) {
      for (std::uint32_t z = 1; z < 4; ++z) EXPECT_EQ(pattern_event_prob(d, v, EdgePattern{z}), 0.0);
    }
  }
}

TEST(Marginals, MatchEnumeration) {
  Rng rng(99);
  for (auto s : {TreeShape(2, 2), TreeShape(3, 2), TreeShape(1, 3)})
    for (int i = 0; i < 10; ++i) {
      const auto d = random_distribution(s, rng, i % 2 ? 0.25 : 0.0);
      const auto tab = oracle::table(d);
      for (NodeIndex n = 0; n < s.node_count(); ++n) {
        const auto v = NodeAddress::from_index(s, n);
        const double np = oracle::node_prob(tab, v);
        EXPECT_NEAR(node_prob(d, v), np, kTol);
        EXPECT_NEAR(leaf_prob(d, v), oracle::leaf_prob(tab, v), kTol);
        EXPECT_NEAR(inner_prob(d, v), oracle::inner_prob(tab, v), kTol);
        for (std::uint32_t z = 0; z < s.pattern_count(); ++z) {
          const double pe = oracle::pattern_event_prob(tab, v, EdgePattern{z});
          EXPECT_NEAR(pattern_event_prob(d, v, EdgePattern{z}), pe, kTol);
          if (np > 0) { EXPECT_NEAR(conditional_pattern_prob(d, v, EdgePattern{z}), pe / np, kTol); }
        }
        if (!v.is_root()) {
          const double ep = oracle::edge_prob(tab, v);
          EXPECT_NEAR(edge_prob(d, v), ep, kTol);
          const double pp = oracle::node_prob(tab, parent(v));
          if (pp > 0) { EXPECT_NEAR(conditional_edge_prob(d, v), ep / pp, kTol); }
        }
      }
    }
}

TEST(Marginals, ZeroProbabilityCondition) {
  const TreeShape s(2, 2);
  const auto d = TreeDistribution::uniform(s).with_param(NodeAddress::root(),
                                                         NodeParam::point_mass(2, EdgePattern{1}));
  try {
    conditional_pattern_prob(d, NodeAddress({1}), EdgePattern{});
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_STREQ(e.what(), "conditioning event has probability zero");
  }
  EXPECT_THROW(conditional_edge_prob(d, NodeAddress({1, 0})), DomainError);
  EXPECT_NO_THROW(conditional_edge_prob(d, NodeAddress({0, 0})));
}

TEST(Mode, RootOnlyWins) {
  const TreeShape s(2, 2);
  const auto m = mode(root_heavy(s));
  EXPECT_EQ(m.tree, RootedSubtree::root_only());
  EXPECT_DOUBLE_EQ(m.probability, 0.6);
}

TEST(Mode, DeterministicDistribution) {
  const TreeShape s(2, 2);
  TreeDistribution d = TreeDistribution::uniform(s);
  d.set_param(NodeAddress::root(), NodeParam::point_mass(2, EdgePattern{3}));
  d.set_param(NodeAddress({0}), NodeParam::point_mass(2, EdgePattern{2}));
  d.set_param(NodeAddress({1}), NodeParam::point_mass(2, EdgePattern{0}));
  const auto m = mode(d);
  EXPECT_EQ(m.tree.to_text(2), "-:11\n0:01\n0.1:00\n1:00\n");
  EXPECT_DOUBLE_EQ(m.probability, 1.0);
}

TEST(Mode, TiesGoToLexicographicallySmallest) {
  // Uniform (2,1): all four trees have probability 1/4; 00 is smallest.
  EXPECT_EQ(mode(TreeDistribution::uniform(TreeShape(2, 1))).tree, RootedSubtree::root_only());
  // Patterns 10 and 01 tie at the root; (0,1) < (1,0).
  const TreeShape s(2, 1);
  const auto d = TreeDistribution::uniform(s).with_param(
      NodeAddress::root(), NodeParam::from_probs({0.1, 0.4, 0.4, 0.1}, 2));
  EXPECT_EQ(mode(d).tree.to_text(2), "-:01\n1:00\n");
}

TEST(Mode, MatchesEnumeratedMaximum) {
  Rng rng(123);
  for (auto s : {TreeShape(3, 2), TreeShape(2, 3)})
    for (int i = 0; i < 100; ++i) {
      const auto d = random_distribution(s, rng, i % 3 == 0 ? 0.3 : 0.0);
      const double best = oracle::max_prob(oracle::table(d));
      const auto m = mode(d);
      EXPECT_NEAR(m.probability, best, 1e-12 * best);
      EXPECT_NEAR(prob(d, m.tree), best, 1e-12 * best);
    }
}

TEST(Expectations, Examples) {
  const TreeShape s(2, 2);
  Rng rng(8);
  const auto d = random_distribution(s, rng);
  const NodeFunction one = [](const NodeAddress&, EdgePattern) { return 1.0; };
  EXPECT_NEAR(expect_product(d, one), 1.0, 1e-12);

  // Trees without v contribute 1, the others the indicator.
  const NodeAddress v({1});
  const EdgePattern z{2};
  const NodeFunction ind = [&](const NodeAddress& a, EdgePattern p) {
    return a == v ? (p == z ? 1.0 : 0.0) : 1.0;
  };
  EXPECT_NEAR(expect_product(d, ind), 1.0 - node_prob(d, v) + pattern_event_prob(d, v, z), 1e-12);

  const auto root_only = d.with_param(NodeAddress::root(), NodeParam::point_mass(2, EdgePattern{}));
  EXPECT_DOUBLE_EQ(expect_sum(root_only, one), 1.0);

  const auto tab = oracle::table(d);
  const RandomNodeTable gp(s, rng, 0.2, 2.0);
  const RandomNodeTable gs(s, rng, -3.0, 3.0);
  EXPECT_NEAR(expect_product(d, gp), oracle::product_expectation(tab, gp), kTol);
  EXPECT_NEAR(expect_sum(d, gs), oracle::sum_expectation(tab, gs), kTol);
  EXPECT_NEAR(expect_sum(d, one), oracle::sum_expectation(tab, one), kTol);
}

TEST(Expectations, InfiniteTermsUnderZeroTheta) {
  const TreeShape s(2, 2);
  Rng rng(4);
  const auto d = random_distribution(s, rng, 0.4);
  const NodeFunction neglog = [&](const NodeAddress& a, EdgePattern z) {
    const double t = d.param(a)[z];
    return t > 0 ? -std::log(t) : std::numeric_limits<double>::infinity();
  };
  EXPECT_NEAR(expect_sum(d, neglog), entropy(d), 1e-12);
  EXPECT_TRUE(std::isfinite(entropy(d)));
}

TEST(Entropy, Examples) {
  TreeDistribution det = TreeDistribution::uniform(TreeShape(2, 2));
  for (NodeIndex n = 0; n < 3; ++n)
    det.set_param(NodeAddress::from_index(TreeShape(2, 2), n),
                  NodeParam::point_mass(2, EdgePattern{n == 0 ? 3u : 0u}));
  EXPECT_DOUBLE_EQ(entropy(det), 0.0);
  EXPECT_NEAR(entropy(TreeDistribution::uniform(TreeShape(2, 1))), std::log(4.0), 1e-15);

  Rng rng(17);
  for (auto s : {TreeShape(2, 2), TreeShape(3, 2)})
    for (int i = 0; i < 10; ++i) {
      const auto d = random_distribution(s, rng, i % 2 ? 0.3 : 0.0);
      const double h = entropy(d);
      EXPECT_NEAR(h, oracle::entropy(oracle::table(d)), kTol);
      EXPECT_GE(h, 0.0);
      EXPECT_LE(h, std::log(static_cast<double>(subtree_count(s))) + 1e-12);
    }
}

TEST(KL, Examples) {
  Rng rng(21);
  for (auto s : {TreeShape(2, 2), TreeShape(3, 2)})
    for (int i = 0; i < 10; ++i) {
      const auto p = random_distribution(s, rng, 0.3);
      const auto q = random_distribution(s, rng);
      EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-15);
      EXPECT_NEAR(kl_divergence(p, q), oracle::kl(oracle::table(p), oracle::table(q)), kTol);
    }
}

TEST(KL, SupportViolationNamesNodeAndPattern) {
  const TreeShape s(2, 2);
  const auto p = TreeDistribution::uniform(s);
  const auto q = p.with_param(NodeAddress({1}), NodeParam::point_mass(2, EdgePattern{}));
  try {
    kl_divergence(p, q);
    FAIL();
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("node 1 "), std::string::npos) << msg;
    EXPECT_NE(msg.find("pattern 10"), std::string::npos) << msg;
  }
  // Reverse direction is fine: q's support is inside p's.
  EXPECT_GT(kl_divergence(q, p), 0.0);
}

TEST(KL, UnreachableDifferencesDoNotCount) {
  const TreeShape s(2, 2);
  const auto p = TreeDistribution::uniform(s).with_param(NodeAddress::root(),
                                                         NodeParam::point_mass(2, EdgePattern{1}));
  const auto q = p.with_param(NodeAddress({1}), NodeParam::point_mass(2, EdgePattern{}));
  EXPECT_DOUBLE_EQ(kl_divergence(p, q), 0.0);
}

TEST(Sample, DeterministicCases) {
  const TreeShape s(2, 2);
  const auto d = TreeDistribution::uniform(s).with_param(NodeAddress::root(),
                                                         NodeParam::point_mass(2, EdgePattern{}));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample(d, rng), RootedSubtree::root_only());

  const auto u = TreeDistribution::uniform(s);
  Rng a(42), b(42);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample(u, a), sample(u, b));
}

// Chi-square goodness of fit of 10^5 samples against exact probabilities at
// significance 1e-4. Bins with expected count below 5 are pooled.
TEST(Sample, ChiSquareGoodnessOfFit) {
  const TreeShape s(2, 2);
  Rng seeds(2024);
  for (int rep = 0; rep < 5; ++rep) {
    const auto d = rep == 0 ? TreeDistribution::uniform(s) : random_distribution(s, seeds, 0.2);
    const auto trees = enumerate_subtrees(s);
    std::map<RootedSubtree::NodeMap, std::size_t> bin;
    for (std::size_t i = 0; i < trees.size(); ++i) bin[trees[i].nodes()] = i;
    std::vector<double> observed(trees.size(), 0.0);
    const int n = 100000;
    Rng rng(derive_seed(77, rep));
    for (int i = 0; i < n; ++i) {
      const auto t = sample(d, rng);
      ASSERT_FALSE(validate_subtree(s, t));
      observed[bin.at(t.nodes())] += 1.0;
    }
    double stat = 0.0, pool_obs = 0.0, pool_exp = 0.0;
    int cells = 0;
    for (std::size_t i = 0; i < trees.size(); ++i) {
      const double e = n * prob(d, trees[i]);
      if (e == 0.0) {
        EXPECT_EQ(observed[i], 0.0);
        continue;
      }
      if (e < 5.0) {
        pool_obs += observed[i];
        pool_exp += e;
        continue;
      }
      stat += (observed[i] - e) * (observed[i] - e) / e;
      ++cells;
    }
    if (pool_exp > 0.0) {
      stat += (pool_obs - pool_exp) * (pool_obs - pool_exp) / pool_exp;
      ++cells;
    }
    ASSERT_GE(cells, 2);
    const boost::math::chi_squared chi(cells - 1);
    EXPECT_LT(stat, boost::math::quantile(boost::math::complement(chi, 1e-4))) << "rep " << rep;
  }
}
