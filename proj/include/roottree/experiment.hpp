#ifndef ROOTTREE_EXPERIMENT_HPP
#define ROOTTREE_EXPERIMENT_HPP

// Synthetic compression experiment: sample sources from a truth prior,
// generate sequences, and report the average code length per symbol of each
// compared prior rule at a grid of prefix lengths.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "roottree/codec.hpp"
#include "roottree/context_tree.hpp"
#include "roottree/error.hpp"
#include "roottree/random.hpp"

namespace roottree {

// "uniform", "full_tree" (alpha 1/2) or "full_tree:<alpha>".
inline PriorRule parse_rule(const std::string& text) {
  if (text == "uniform") return PriorRule::uniform();
  if (text == "full_tree") return PriorRule::full_tree(0.5);
  const std::string prefix = "full_tree:";
  if (text.compare(0, prefix.size(), prefix) == 0) {
    const std::string num = text.substr(prefix.size());
    char* end = nullptr;
    const double a = std::strtod(num.c_str(), &end);
    if (num.empty() || *end != '\0' || !(a >= 0.0 && a <= 1.0))
      throw ConfigError("full_tree alpha must be a number in [0, 1], got '" + num + "'");
    return PriorRule::full_tree(a);
  }
  throw ConfigError("unknown prior rule '" + text + "' (expected uniform or full_tree[:alpha])");
}

// Powers of two up to n, then n itself if it is not one.
inline std::vector<std::uint64_t> default_grid(std::uint64_t n) {
  std::vector<std::uint64_t> g;
  for (std::uint64_t p = 1; p <= n; p *= 2) g.push_back(p);
  if (n > 0 && g.back() != n) g.push_back(n);
  return g;
}

struct ExperimentConfig {
  unsigned k_max = 4;
  unsigned d_max = 5;
  std::uint64_t num_sequences = 100;
  std::uint64_t length = 1000;
  std::vector<std::uint64_t> grid;  // empty: default_grid(length)
  std::vector<PriorRule> rules{PriorRule::uniform(), PriorRule::full_tree(0.5)};
  PriorRule truth = PriorRule::uniform();
  Symbol padding = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool realized = false;  // also encode each prefix and report payload bits

  std::vector<std::uint64_t> effective_grid() const {
    return grid.empty() ? default_grid(length) : grid;
  }

  void validate() const {
    if (k_max < 1 || k_max > 8) throw ConfigError("k_max must be in [1, 8]");
    if (d_max < 1 || d_max > 12) throw ConfigError("d_max must be in [1, 12]");
    if (num_sequences < 1) throw ConfigError("need at least one sequence");
    if (length < 1) throw ConfigError("sequence length must be positive");
    if (rules.empty()) throw ConfigError("need at least one prior rule");
    if (threads < 1) throw ConfigError("threads must be positive");
    if (padding >= k_max) throw ConfigError("padding symbol must be below k_max");
    for (std::uint64_t g : effective_grid())
      if (g < 1 || g > length)
        throw ConfigError("grid value " + std::to_string(g) + " is outside [1, n]");
    const TreeShape shape(k_max, d_max);
    detail::require_recursable(shape);
  }
};

struct ExperimentRow {
  std::string rule;
  std::uint64_t n = 0;
  double mean_bits_per_symbol = 0.0;
  double stderr_bits = 0.0;
  double mean_realized = 0.0;  // when realized
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ExperimentRow> rows;  // rule-major, grid order within a rule

  const ExperimentRow& at(std::size_t rule, std::size_t grid_index) const {
    return rows[rule * config.effective_grid().size() + grid_index];
  }
};

namespace detail {

// Per sequence: bits per symbol for every (rule, grid point), rule-major.
struct SequenceResult {
  std::vector<double> ideal;
  std::vector<double> realized;
};

inline SequenceResult run_sequence(const ExperimentConfig& c, std::uint64_t s) {
  const TreeShape shape(c.k_max, c.d_max);
  const auto grid = c.effective_grid();
  const ModelConfig truth{shape, c.padding, c.truth};
  SourceGenerator gen = sample_source(truth, c.truth.distribution(shape), derive_seed(c.seed, s));
  const std::vector<Symbol> x = gen.take(c.length);
  SequenceResult r;
  for (const PriorRule& rule : c.rules) {
    const ModelConfig mc{shape, c.padding, rule};
    const std::vector<double> bits = symbol_codelengths(mc, x);
    double acc = 0.0;
    std::size_t pos = 0;
    for (std::uint64_t g : grid) {
      // grid need not be sorted
      if (g < pos) {
        acc = 0.0;
        pos = 0;
      }
      for (; pos < g; ++pos) acc += bits[pos];
      r.ideal.push_back(acc / static_cast<double>(g));
      if (c.realized) {
        const Bitstream b = encode(mc, std::span<const Symbol>(x).first(g));
        r.realized.push_back(static_cast<double>(b.payload_bits()) / static_cast<double>(g));
      }
    }
  }
  return r;
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto grid = config.effective_grid();
  std::vector<detail::SequenceResult> results(config.num_sequences);

  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::uint64_t s; (s = next++) < config.num_sequences;) {
      try {
        results[s] = detail::run_sequence(config, s);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = config.num_sequences;
      }
    }
  };
  const unsigned threads =
      static_cast<unsigned>(std::min<std::uint64_t>(config.threads, config.num_sequences));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Aggregate in sequence-index order so the output does not depend on
  // scheduling.
  ExperimentReport report{config, {}};
  const double m = static_cast<double>(config.num_sequences);
  for (std::size_t r = 0; r < config.rules.size(); ++r) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const std::size_t slot = r * grid.size() + g;
      double sum = 0.0, realized = 0.0;
      for (const auto& res : results) {
        sum += res.ideal[slot];
        if (config.realized) realized += res.realized[slot];
      }
      const double mean = sum / m;
      double ss = 0.0;
      for (const auto& res : results) ss += (res.ideal[slot] - mean) * (res.ideal[slot] - mean);
      const double se = config.num_sequences > 1 ? std::sqrt(ss / (m - 1.0) / m) : 0.0;
      report.rows.push_back({config.rules[r].name(), grid[g], mean, se, realized / m});
    }
  }
  return report;
}

inline std::string to_csv(const ExperimentReport& report) {
  std::string out = "rule,n,mean_bits_per_symbol,stderr,num_sequences,seed";
  if (report.config.realized) out += ",mean_realized_bits_per_symbol";
  out += "\n";
  char buf[256];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%.12g,%.12g,%llu,%llu", row.rule.c_str(),
                  static_cast<unsigned long long>(row.n), row.mean_bits_per_symbol,
                  row.stderr_bits,
                  static_cast<unsigned long long>(report.config.num_sequences),
                  static_cast<unsigned long long>(report.config.seed));
    out += buf;
    if (report.config.realized) {
      std::snprintf(buf, sizeof buf, ",%.12g", row.mean_realized);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace roottree

#endif  // ROOTTREE_EXPERIMENT_HPP
