#include <gtest/gtest.h>

#include "roottree/verify.hpp"

using namespace roottree;

TEST(Verify, DefaultScopePasses) {
  VerifyOptions opt;
  opt.cases = 6;
  const auto rep = run_verify(opt);
  EXPECT_EQ(rep.suites.size(), verify_suite_names().size());
  for (const auto& s : rep.suites) {
    EXPECT_GT(s.checks, 0u) << s.name;
    for (const auto& f : s.failures) ADD_FAILURE() << f.suite << ": " << f.detail << "\n" << f.replay;
  }
  EXPECT_TRUE(rep.ok()) << rep.summary();
}

TEST(Verify, PosteriorScopeRunsOnlyConjugacySuites) {
  VerifyOptions opt;
  opt.cases = 2;
  opt.scope = {"posterior"};
  const auto rep = run_verify(opt);
  std::vector<std::string> names;
  for (const auto& s : rep.suites) names.push_back(s.name);
  EXPECT_EQ(names, (std::vector<std::string>{"posterior_general", "posterior_path", "dirichlet"}));
  EXPECT_TRUE(rep.ok());
}

TEST(Verify, UnknownScopeIsAConfigError) {
  VerifyOptions opt;
  opt.scope = {"nonsense"};
  EXPECT_THROW(run_verify(opt), ConfigError);
}

TEST(Verify, InjectedFaultIsReportedWithNodeAddress) {
  VerifyOptions opt;
  opt.cases = 2;
  opt.scope = {"normalization"};
  opt.inject_fault = NodeAddress({0});
  const auto rep = run_verify(opt);
  ASSERT_EQ(rep.suites.size(), 1u);
  EXPECT_FALSE(rep.ok());
  ASSERT_FALSE(rep.suites[0].failures.empty());
  const auto& f = rep.suites[0].failures[0];
  EXPECT_NE(f.detail.find("node 0 "), std::string::npos) << f.detail;
  // The replay block carries the faulty distribution.
  EXPECT_NE(f.replay.find("# replay: suite=normalization"), std::string::npos);
  EXPECT_NE(f.replay.find("kind tree_distribution"), std::string::npos);
}
