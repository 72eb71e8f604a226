// roottree: distribution queries, the context-tree codec, the synthetic
// compression experiment and the oracle verification suites.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 verification failure.
// Every failure prints exactly one line "error[<kind>]: <message>".

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "roottree/roottree.hpp"

namespace {

using namespace roottree;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kVerify = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int fail(const char* kind, std::string msg, int code) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "error[%s]: %s\n", kind, msg.c_str());
  return code;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  const std::string s = io::read_file(path);
  return {s.begin(), s.end()};
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write to " + path + " failed");
}

NodeAddress address_arg(const std::string& text, const TreeShape& shape) {
  NodeAddress a;
  try {
    a = NodeAddress::parse(text);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (!a.valid_for(shape)) throw UsageError("address " + text + " is outside the base tree");
  return a;
}

std::string num(double x) { return io::format_double(x); }

// query ---------------------------------------------------------------------

struct QueryArgs {
  std::string dist_file;
  std::string what;
  std::string node;
  std::string pattern;
  std::uint64_t seed = 0;
  unsigned count = 1;
};

int run_query(const QueryArgs& a) {
  const TreeDistribution dist = io::parse_distribution(io::read_file(a.dist_file));
  const TreeShape& shape = dist.shape();
  auto need_node = [&] {
    if (a.node.empty()) throw UsageError(a.what + " needs --node");
    return address_arg(a.node, shape);
  };
  if (a.what == "mode") {
    const ModeResult m = mode(dist);
    std::cout << "# probability " << num(m.probability) << "\n" << m.tree.to_text(shape.k_max());
  } else if (a.what == "entropy") {
    std::cout << num(entropy(dist)) << "\n";
  } else if (a.what == "node-prob") {
    std::cout << num(node_prob(dist, need_node())) << "\n";
  } else if (a.what == "pattern-prob") {
    const NodeAddress v = need_node();
    if (a.pattern.empty()) throw UsageError("pattern-prob needs --pattern");
    EdgePattern z;
    try {
      z = EdgePattern::parse(a.pattern, shape.k_max());
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    std::cout << num(pattern_event_prob(dist, v, z)) << "\n";
  } else if (a.what == "sample") {
    Rng rng(a.seed);
    for (unsigned i = 0; i < a.count; ++i) {
      if (i > 0) std::cout << "\n";
      std::cout << sample(dist, rng).to_text(shape.k_max());
    }
  }
  return kOk;
}

// codec ---------------------------------------------------------------------

struct CodecArgs {
  std::string action;
  unsigned k_max = 2;
  unsigned d_max = 3;
  std::string prior = "uniform";
  unsigned padding = 0;
  std::string input;
  std::string output;
  bool per_symbol = false;
};

ModelConfig model_config(const CodecArgs& a) {
  TreeShape shape(1, 1);
  try {
    shape = TreeShape(a.k_max, a.d_max);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (a.k_max > 255 || a.d_max > 255) throw UsageError("k_max and d_max must fit in one byte");
  if (a.padding >= a.k_max) throw UsageError("padding symbol must be below k_max");
  return {shape, static_cast<Symbol>(a.padding), parse_rule(a.prior)};
}

int run_codec(const CodecArgs& a) {
  if (a.action == "decode") {
    if (a.output.empty()) throw UsageError("decode needs --output");
    const Decoded d = decode(read_bytes(a.input));
    write_bytes(a.output, d.symbols);
    return kOk;
  }
  const ModelConfig cfg = model_config(a);
  const std::vector<std::uint8_t> x = read_bytes(a.input);
  if (a.action == "encode") {
    if (a.output.empty()) throw UsageError("encode needs --output");
    write_bytes(a.output, encode(cfg, x).to_bytes());
    return kOk;
  }
  const std::vector<double> bits = symbol_codelengths(cfg, x);
  double total = 0.0;
  for (double b : bits) total += b;
  std::cout << "symbols " << x.size() << "\n"
            << "total_bits " << num(total) << "\n"
            << "bits_per_symbol " << num(x.empty() ? 0.0 : total / static_cast<double>(x.size()))
            << "\n";
  if (a.per_symbol)
    for (std::size_t i = 0; i < bits.size(); ++i) std::cout << i + 1 << " " << num(bits[i]) << "\n";
  return kOk;
}

// experiment ----------------------------------------------------------------

struct ExperimentArgs {
  ExperimentConfig config;
  std::vector<std::string> rules;
  std::string truth = "uniform";
  std::string output;
};

int run_experiment_cmd(ExperimentArgs& a) {
  ExperimentConfig& c = a.config;
  if (!a.rules.empty()) {
    c.rules.clear();
    for (const auto& r : a.rules) c.rules.push_back(parse_rule(r));
  }
  c.truth = parse_rule(a.truth);
  c.validate();
  const std::string csv = to_csv(run_experiment(c));
  if (a.output.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(a.output, std::ios::binary);
    if (!out) throw Error("cannot open " + a.output + " for writing");
    out << csv;
  }
  return kOk;
}

// verify --------------------------------------------------------------------

struct VerifyArgs {
  VerifyOptions options;
  std::string inject;
  std::string replay_dir;
};

int run_verify_cmd(VerifyArgs& a) {
  if (!a.inject.empty()) {
    try {
      a.options.inject_fault = NodeAddress::parse(a.inject);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  const VerifyReport rep = run_verify(a.options);
  std::cout << rep.summary();
  if (rep.ok()) return kOk;
  std::size_t index = 0;
  for (const auto& s : rep.suites)
    for (const auto& f : s.failures) {
      std::cerr << "# " << f.detail << "\n" << f.replay;
      if (!a.replay_dir.empty()) {
        std::filesystem::create_directories(a.replay_dir);
        const std::string path = a.replay_dir + "/" + f.suite + "_" + std::to_string(index++) + ".txt";
        std::ofstream out(path);
        out << "# " << f.detail << "\n" << f.replay;
      }
    }
  std::size_t failed = 0;
  for (const auto& s : rep.suites) failed += s.failed;
  return fail("verify", std::to_string(failed) + " checks failed", kVerify);
}

// Config values fill options the command line left unset.
void apply_config(CLI::App& sub, const std::string& path) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path);
  } catch (const CLI::FileError&) {
    throw Error("cannot read config file " + path);
  } catch (const CLI::ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const std::string key = item.fullname();
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") throw UsageError(path + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(item.inputs);
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw UsageError(path + ": " + key + ": " + e.what());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rooted-subtree distributions, context-tree coding and oracle checks"};
  app.require_subcommand(1);

  QueryArgs qa;
  auto* query = app.add_subcommand("query", "Query a distribution file");
  query->add_option("what", qa.what, "mode | entropy | node-prob | pattern-prob | sample")
      ->required()
      ->check(CLI::IsMember({"mode", "entropy", "node-prob", "pattern-prob", "sample"}));
  query->add_option("--dist,-d", qa.dist_file, "Distribution file")->required();
  query->add_option("--node", qa.node, "Node address, e.g. 0.1 or - for the root");
  query->add_option("--pattern", qa.pattern, "Edge pattern bitstring, child 0 first");
  query->add_option("--seed", qa.seed, "Sampling seed")
      ->capture_default_str();
  query->add_option("--count", qa.count, "Number of samples")->check(CLI::PositiveNumber)
      ->capture_default_str();

  CodecArgs ca;
  auto* codec = app.add_subcommand("codec", "Context-tree entropy codec");
  codec->add_option("action", ca.action, "encode | decode | codelength")
      ->required()
      ->check(CLI::IsMember({"encode", "decode", "codelength"}));
  codec->add_option("--k-max", ca.k_max, "Alphabet size and branching factor")
      ->capture_default_str();
  codec->add_option("--d-max", ca.d_max, "Maximum context depth")
      ->capture_default_str();
  codec->add_option("--prior", ca.prior, "uniform | full_tree[:alpha]")
      ->capture_default_str();
  codec->add_option("--padding", ca.padding, "Symbol used before the start of the sequence")
      ->capture_default_str();
  codec->add_option("--input,-i", ca.input, "Input file")->required();
  codec->add_option("--output,-o", ca.output, "Output file");
  codec->add_flag("--per-symbol", ca.per_symbol, "codelength: list bits for every position");

  ExperimentArgs ea;
  auto* exp = app.add_subcommand("experiment", "Synthetic compression experiment (CSV output)");
  std::string config_file;
  exp->add_option("--config", config_file, "Configuration file (TOML/INI key = value, keys are the long flag names)");
  // Mandatory, but may come from the config file, so checked after parsing.
  auto* seed_opt = exp->add_option("--seed", ea.config.seed, "Base seed (mandatory)");
  exp->add_option("--k-max", ea.config.k_max, "Branching factor / alphabet size")
      ->capture_default_str();
  exp->add_option("--d-max", ea.config.d_max, "Maximum depth")
      ->capture_default_str();
  exp->add_option("--sequences", ea.config.num_sequences, "Number of sampled sources")
      ->capture_default_str();
  exp->add_option("--length", ea.config.length, "Sequence length n")
      ->capture_default_str();
  exp->add_option("--grid", ea.config.grid, "Prefix lengths (default: powers of two, then n)")
      ->delimiter(',');
  exp->add_option("--rules", ea.rules, "Prior rules to compare")->delimiter(',');
  exp->add_option("--truth", ea.truth, "Prior the sources' trees are drawn from")
      ->capture_default_str();
  exp->add_option("--threads", ea.config.threads, "Worker threads")
      ->capture_default_str();
  exp->add_flag("--realized", ea.config.realized, "Also report realized payload length");
  exp->add_option("--output,-o", ea.output, "CSV path (default stdout)");

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "Run the enumeration-oracle suites");
  ver->add_option("--scope", va.options.scope, "Suites or groups (all, posterior, ...)")
      ->delimiter(',');
  ver->add_option("--seed", va.options.seed, "Seed for random instances")
      ->capture_default_str();
  ver->add_option("--cases", va.options.cases, "Random instances per shape")
      ->capture_default_str();
  ver->add_option("--inject-fault", va.inject, "Perturb theta at this node in the normalization suite");
  ver->add_option("--replay-dir", va.replay_dir, "Write failing cases here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kUsage);
  }

  try {
    if (query->parsed()) return run_query(qa);
    if (codec->parsed()) return run_codec(ca);
    if (exp->parsed()) {
      if (!config_file.empty()) apply_config(*exp, config_file);
      if (seed_opt->count() == 0) throw UsageError("--seed is required (flag or config file)");
      return run_experiment_cmd(ea);
    }
    if (ver->parsed()) return run_verify_cmd(va);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), kUsage);
  } catch (const ConfigError& e) {
    return fail("usage", e.what(), kUsage);
  } catch (const std::exception& e) {
    return fail("data", e.what(), kData);
  }
  return kOk;
}
