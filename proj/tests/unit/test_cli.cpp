#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "roottree/roottree.hpp"

using namespace roottree;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("roottree_cli_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliRun cli(const std::string& args) {
  const fs::path out = scratch() / "stdout", err = scratch() / "stderr";
  const std::string cmd = std::string("\"") + ROOTTREE_CLI + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string sample(const char* name) { return std::string("\"") + ROOTTREE_SAMPLES + "/" + name + "\""; }

void expect_diagnostic(const CliRun& r, int code, const std::string& kind) {
  EXPECT_EQ(r.code, code) << r.err;
  EXPECT_EQ(r.err.rfind("error[" + kind + "]: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
}

double field(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string k;
  double v;
  while (in >> k >> v)
    if (k == key) return v;
  ADD_FAILURE() << "no " << key << " in " << text;
  return 0.0;
}

}  // namespace

TEST(CliQuery, EntropyOfPointMassIsZero) {
  const CliRun r = cli("query entropy --dist " + sample("deterministic_2x2.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::stod(r.out), 0.0);
}

TEST(CliQuery, RootIsAlwaysPresent) {
  const CliRun r = cli("query node-prob --node - --dist " + sample("dist_2x2.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::stod(r.out), 1.0);
}

TEST(CliQuery, ModeMatchesEnumeratedFixture) {
  const CliRun r = cli("query mode --dist " + sample("dist_2x2.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string expected = slurp(fs::path(ROOTTREE_SAMPLES) / "dist_2x2.mode");
  const auto nl = r.out.find('\n');
  EXPECT_EQ(r.out.substr(nl + 1), expected);
  const auto dist = io::parse_distribution(slurp(fs::path(ROOTTREE_SAMPLES) / "dist_2x2.txt"));
  const auto tab = oracle::table(dist);
  const double best = oracle::max_prob(tab);
  EXPECT_NEAR(std::stod(r.out.substr(std::string("# probability ").size())), best, 1e-15);
  EXPECT_DOUBLE_EQ(oracle::direct_prob(dist, RootedSubtree::parse_text(expected, 2)), best);
}

TEST(CliQuery, PatternProbAndSampling) {
  const CliRun p = cli("query pattern-prob --node 0 --pattern 11 --dist " + sample("dist_2x2.txt"));
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_NEAR(std::stod(p.out), (0.25 + 0.35) * 0.3, 1e-15);
  const CliRun a = cli("query sample --seed 4 --count 3 --dist " + sample("dist_2x2.txt"));
  const CliRun b = cli("query sample --seed 4 --count 3 --dist " + sample("dist_2x2.txt"));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.rfind("-:", 0), 0u);
}

TEST(CliQuery, ErrorsAreSingleLineWithExitCodes) {
  expect_diagnostic(cli("query node-prob --node 7.7 --dist " + sample("dist_2x2.txt")), 1, "usage");
  expect_diagnostic(cli("query node-prob --node x --dist " + sample("dist_2x2.txt")), 1, "usage");
  expect_diagnostic(cli("query frobnicate --dist " + sample("dist_2x2.txt")), 1, "usage");
  expect_diagnostic(cli("nonsense"), 1, "usage");
  expect_diagnostic(cli(""), 1, "usage");

  const fs::path bad = scratch() / "bad.txt";
  std::ofstream(bad) << "kind tree_distribution\nshape k_max=2 d_max=2\ndefault uniform\ntheta - 1 0 0\n";
  const CliRun r = cli("query entropy --dist \"" + bad.string() + "\"");
  expect_diagnostic(r, 2, "data");
  EXPECT_NE(r.err.find("line 4"), std::string::npos) << r.err;
  expect_diagnostic(cli("query entropy --dist /nonexistent/file"), 2, "data");
}

TEST(CliCodec, RoundtripOfRandomFileIsByteIdentical) {
  Rng rng(11);
  std::string data(10000, '\0');
  for (char& c : data) c = static_cast<char>(rng() % 4);
  const fs::path in = scratch() / "rand.bin", enc = scratch() / "rand.gctb", dec = scratch() / "rand.out";
  std::ofstream(in, std::ios::binary) << data;
  const std::string flags = " --k-max 4 --d-max 5 --prior full_tree:0.5 --padding 1";
  ASSERT_EQ(cli("codec encode" + flags + " -i \"" + in.string() + "\" -o \"" + enc.string() + "\"").code, 0);
  const CliRun d = cli("codec decode -i \"" + enc.string() + "\" -o \"" + dec.string() + "\"");
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_EQ(slurp(dec), data);

  std::string corrupt = slurp(enc);
  corrupt.resize(corrupt.size() - 5);
  std::ofstream(enc, std::ios::binary | std::ios::trunc) << corrupt;
  expect_diagnostic(cli("codec decode -i \"" + enc.string() + "\" -o \"" + dec.string() + "\""), 2, "data");
}

TEST(CliCodec, CodelengthOfEmptyFileIsZero) {
  const fs::path in = scratch() / "empty.bin";
  std::ofstream(in, std::ios::binary).flush();
  const CliRun r = cli("codec codelength --k-max 4 --d-max 5 -i \"" + in.string() + "\"");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(field(r.out, "total_bits"), 0.0);
  EXPECT_EQ(field(r.out, "symbols"), 0.0);
}

TEST(CliCodec, ProposedPriorBeatsFullTreePriorOnFixture) {
  const std::string seq = sample("source_k4d5.bin");
  const std::string flags = " --k-max 4 --d-max 5 -i " + seq;
  const CliRun u = cli("codec codelength --prior uniform" + flags);
  const CliRun f = cli("codec codelength --prior full_tree:0.5" + flags);
  ASSERT_EQ(u.code, 0) << u.err;
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_LE(field(u.out, "total_bits"), field(f.out, "total_bits"));
  const std::string bytes = slurp(fs::path(ROOTTREE_SAMPLES) / "source_k4d5.bin");
  const std::vector<Symbol> x(bytes.begin(), bytes.end());
  EXPECT_NEAR(field(u.out, "total_bits"), ideal_codelength({TreeShape(4, 5), 0, PriorRule::uniform()}, x),
              1e-6);
}

TEST(CliCodec, BadSymbolsAndFlags) {
  const fs::path in = scratch() / "wide.bin";
  std::ofstream(in, std::ios::binary) << std::string("\x00\x01\x05", 3);
  expect_diagnostic(cli("codec codelength --k-max 4 --d-max 2 -i \"" + in.string() + "\""), 2, "data");
  expect_diagnostic(cli("codec codelength --k-max 4 --prior ctw -i \"" + in.string() + "\""), 1, "usage");
  expect_diagnostic(cli("codec codelength --k-max 0 -i \"" + in.string() + "\""), 1, "usage");
  expect_diagnostic(cli("codec encode --k-max 8 -i \"" + in.string() + "\""), 1, "usage");
}

TEST(CliExperiment, SeedIsMandatory) {
  expect_diagnostic(cli("experiment --length 10 --sequences 2"), 1, "usage");
}

TEST(CliExperiment, CsvIsReproducible) {
  const std::string args = "experiment --k-max 2 --d-max 3 --sequences 3 --length 64 --seed 9";
  const CliRun a = cli(args);
  const CliRun b = cli(args + " --threads 2");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.substr(0, a.out.find('\n')), "rule,n,mean_bits_per_symbol,stderr,num_sequences,seed");
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 1 + 2 * 7);
  ExperimentConfig c;
  c.k_max = 2;
  c.d_max = 3;
  c.num_sequences = 3;
  c.length = 64;
  c.seed = 9;
  EXPECT_EQ(a.out, to_csv(run_experiment(c)));
}

TEST(CliExperiment, ConfigFileWithOverrides) {
  const CliRun r = cli("experiment --config " + sample("experiment.cfg") +
                    " --length 16 --sequences 2 --grid 4,16 --rules uniform");
  ASSERT_EQ(r.code, 0) << r.err;
  ExperimentConfig c;
  c.num_sequences = 2;
  c.length = 16;
  c.grid = {4, 16};
  c.rules = {PriorRule::uniform()};
  c.seed = 20240601;
  EXPECT_EQ(r.out, to_csv(run_experiment(c)));
}

TEST(CliExperiment, ConfigViolationsAreUsageErrors) {
  expect_diagnostic(cli("experiment --seed 1 --length 10 --grid 20"), 1, "usage");
  expect_diagnostic(cli("experiment --seed 1 --rules bogus"), 1, "usage");
  const fs::path cfg = scratch() / "bad.cfg";
  std::ofstream(cfg) << "no-such-key = 3\n";
  expect_diagnostic(cli("experiment --seed 1 --config \"" + cfg.string() + "\""), 1, "usage");
}

TEST(CliVerify, ExitCodes) {
  const CliRun ok = cli("verify --cases 2");
  EXPECT_EQ(ok.code, 0) << ok.err;
  const CliRun post = cli("verify --cases 2 --scope posterior");
  EXPECT_EQ(post.code, 0) << post.err;
  EXPECT_NE(post.out.find("posterior_path"), std::string::npos);
  EXPECT_EQ(post.out.find("normalization"), std::string::npos);

  const fs::path replay = scratch() / "replay";
  const CliRun bad = cli("verify --cases 2 --scope normalization --inject-fault 1 --replay-dir \"" +
                      replay.string() + "\"");
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.err.find("node 1 "), std::string::npos) << bad.err;
  EXPECT_NE(bad.err.find("error[verify]: "), std::string::npos);
  ASSERT_TRUE(fs::exists(replay));
  EXPECT_FALSE(fs::is_empty(replay));
  expect_diagnostic(cli("verify --scope nope"), 1, "usage");
}
