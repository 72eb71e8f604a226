#include <gtest/gtest.h>

#include "roottree/dist_io.hpp"
#include "roottree/random.hpp"

using namespace roottree;

TEST(DistributionText, RoundTripsExactly) {
  Rng rng(1);
  for (auto s : {TreeShape(2, 2), TreeShape(3, 3), TreeShape(1, 2)}) {
    const auto d = random_distribution(s, rng, 0.3);
    const std::string text = io::write_distribution(d);
    const auto back = io::parse_distribution(text);
    EXPECT_EQ(back.shape(), s);
    for (NodeIndex n = 0; n < s.node_count(); ++n) EXPECT_EQ(back.param_at(n), d.param_at(n));
    EXPECT_EQ(io::write_distribution(back), text);
  }
  const auto f = TreeDistribution::full_tree(TreeShape(4, 5), 0.25);
  const auto fb = io::parse_distribution(io::write_distribution(f));
  EXPECT_EQ(std::get<FullTreeRule>(fb.rule()).alpha, 0.25);
  EXPECT_EQ(fb.override_count(), 0u);
}

TEST(DistributionText, DocumentedBitOrder) {
  const std::string text =
      "kind tree_distribution\n"
      "shape k_max=2 d_max=1\n"
      "default explicit\n"
      "# 00 10 01 11\n"
      "theta - 0.1 0.2 0.3 0.4\n";
  const auto d = io::parse_distribution(text);
  EXPECT_DOUBLE_EQ(d.param(NodeAddress::root())[EdgePattern::parse("10", 2)], 0.2);
  EXPECT_DOUBLE_EQ(d.param(NodeAddress::root())[EdgePattern::parse("01", 2)], 0.3);
}

TEST(DistributionText, ErrorsCarryLineNumbers) {
  const auto line_of = [](const std::string& text) -> std::size_t {
    try {
      io::parse_distribution(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  const std::string head = "kind tree_distribution\nshape k_max=2 d_max=2\n";
  EXPECT_EQ(line_of("kind something\n"), 1u);
  EXPECT_EQ(line_of("kind tree_distribution\nshape k_max=0 d_max=2\n"), 2u);
  EXPECT_EQ(line_of(head + "default bogus\n"), 3u);
  EXPECT_EQ(line_of(head + "default uniform\n\ntheta - 0.5 0.5 0 x\n"), 5u);
  EXPECT_EQ(line_of(head + "default uniform\ntheta - 0.5 0.5 0\n"), 4u);
  EXPECT_EQ(line_of(head + "default uniform\ntheta - 0.5 0.5 0.5 0\n"), 4u);
  EXPECT_EQ(line_of(head + "default uniform\ntheta 0.0 0 1 0 0\n"), 4u);
  EXPECT_EQ(line_of(head + "default uniform\ntheta 5 1 0 0 0\n"), 4u);
  EXPECT_EQ(line_of(head + "default uniform\ntheta - 1 0 0 0\ntheta - 1 0 0 0\n"), 5u);
  EXPECT_EQ(line_of(head + "default explicit\ntheta - 1 0 0 0\n"), 3u);
  EXPECT_EQ(line_of(head + "default uniform\nfoo\n"), 4u);
}

TEST(HyperText, RoundTrip) {
  const TreeShape s(2, 2);
  DirichletHyper h(s, 0.5);
  h.set_alpha(NodeAddress({1}), {1.5, 0.5, 2.5, 0.5});
  const auto back = io::parse_hyper(io::write_hyper(h));
  EXPECT_TRUE(back == h);
  EXPECT_THROW(io::parse_hyper("kind dirichlet_hyper\nshape k_max=2 d_max=2\ndefault constant alpha=-1\n"),
               ParseError);
}

TEST(CheckpointText, RestoredModelContinuesIdentically) {
  Rng rng(2);
  const ModelConfig cfg{TreeShape(3, 3), 1, PriorRule::full_tree(0.5)};
  std::vector<Symbol> x(200);
  for (Symbol& s : x) s = static_cast<Symbol>(rng() % 3);
  ContextTreeModel a(cfg);
  for (std::size_t i = 1; i <= 100; ++i) a.update(x, i, x[i - 1]);
  const std::string text = io::write_checkpoint(a);
  ContextTreeModel b = io::parse_checkpoint(text);
  EXPECT_EQ(io::write_checkpoint(b), text);
  for (std::size_t i = 101; i <= x.size(); ++i) {
    const auto pa = a.predictive_distribution(x, i);
    const auto pb = b.predictive_distribution(x, i);
    EXPECT_EQ(pa, pb);
    a.update(x, i, x[i - 1]);
    b.update(x, i, x[i - 1]);
  }
}
