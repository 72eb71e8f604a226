#ifndef ROOTTREE_DIST_IO_HPP
#define ROOTTREE_DIST_IO_HPP

// Structured-text forms of TreeDistribution, DirichletHyper and the
// context-tree model checkpoint. One record per line, '#' starts a comment.
//
//   kind tree_distribution
//   shape k_max=2 d_max=2
//   default uniform                   | full_tree alpha=0.5 | explicit
//   theta <address> p_0 ... p_{2^k-1}
//
//   kind dirichlet_hyper
//   shape k_max=2 d_max=2
//   default constant alpha=1
//   alpha <address> a_0 ... a_{2^k-1}
//
//   kind context_tree_model
//   shape k_max=2 d_max=2
//   padding 0
//   prior uniform                     | full_tree alpha=0.5
//   processed 12
//   theta <address> ...
//   counts <address> n_0 ... n_{k-1}      at max depth
//   counts <address> k rows of k counts   above it, row j = next child j
//
// Vectors are in pattern-index order: the pattern index is the integer value
// of the bit vector with child 0 as the least significant bit, so for k = 2
// the entries are 00, 10, 01, 11 in bitstring form ("10" = child 0 only).
// Addresses are dot-separated child indices, "-" for the root.

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "roottree/conjugacy.hpp"
#include "roottree/context_tree.hpp"
#include "roottree/error.hpp"
#include "roottree/tree_dist.hpp"

namespace roottree::io {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

struct Line {
  std::size_t number;
  std::vector<std::string> words;
};

inline std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> out;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++number;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::istringstream words{std::string(line)};
    Line l{number, {}};
    for (std::string w; words >> w;) l.words.push_back(w);
    if (!l.words.empty()) out.push_back(std::move(l));
    pos = end + 1;
  }
  return out;
}

inline double parse_double(const Line& l, const std::string& w) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(w.c_str(), &end);
  if (w.empty() || *end != '\0' || errno == ERANGE)
    throw ParseError(l.number, "expected a number, got '" + w + "'");
  return v;
}

inline std::uint64_t parse_uint(const Line& l, const std::string& w) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc{} || p != w.data() + w.size())
    throw ParseError(l.number, "expected a nonnegative integer, got '" + w + "'");
  return v;
}

// "key=value" -> value
inline std::string keyed(const Line& l, std::size_t i, std::string_view key) {
  if (i >= l.words.size()) throw ParseError(l.number, "missing " + std::string(key) + "=");
  const std::string& w = l.words[i];
  if (w.size() <= key.size() || w.compare(0, key.size(), key) != 0 || w[key.size()] != '=')
    throw ParseError(l.number, "expected " + std::string(key) + "=..., got '" + w + "'");
  return w.substr(key.size() + 1);
}

inline void expect_words(const Line& l, std::size_t n) {
  if (l.words.size() != n)
    throw ParseError(l.number, "'" + l.words[0] + "' takes " + std::to_string(n - 1) +
                                   " fields, got " + std::to_string(l.words.size() - 1));
}

inline TreeShape parse_shape(const Line& l) {
  expect_words(l, 3);
  const auto k = parse_uint(l, keyed(l, 1, "k_max"));
  const auto d = parse_uint(l, keyed(l, 2, "d_max"));
  try {
    return TreeShape(static_cast<unsigned>(std::min<std::uint64_t>(k, 1u << 20)),
                     static_cast<unsigned>(std::min<std::uint64_t>(d, 1u << 20)));
  } catch (const Error& e) {
    throw ParseError(l.number, e.what());
  }
}

inline NodeAddress parse_address(const Line& l, const std::string& w, const TreeShape& shape) {
  NodeAddress a;
  try {
    a = NodeAddress::parse(w);
  } catch (const Error& e) {
    throw ParseError(l.number, e.what());
  }
  if (!a.valid_for(shape)) throw ParseError(l.number, "address " + w + " is outside the base tree");
  return a;
}

inline std::vector<double> parse_vector(const Line& l, std::size_t n) {
  expect_words(l, n + 2);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = parse_double(l, l.words[i + 2]);
  return v;
}

// Header lines in order: kind, shape. Returns the remaining lines.
inline std::pair<TreeShape, std::span<const Line>> parse_head(const std::vector<Line>& lines,
                                                              std::string_view kind) {
  if (lines.empty()) throw ParseError(1, "empty input");
  const Line& k = lines[0];
  if (k.words[0] != "kind" || k.words.size() != 2 || k.words[1] != kind)
    throw ParseError(k.number, "expected 'kind " + std::string(kind) + "'");
  if (lines.size() < 2 || lines[1].words[0] != "shape")
    throw ParseError(lines.size() < 2 ? k.number + 1 : lines[1].number, "expected 'shape'");
  return {parse_shape(lines[1]), std::span<const Line>(lines).subspan(2)};
}

inline std::string shape_line(const TreeShape& s) {
  return "shape k_max=" + std::to_string(s.k_max()) + " d_max=" + std::to_string(s.d_max()) + "\n";
}

inline std::string vector_line(std::string_view tag, const NodeAddress& a,
                               std::span<const double> v) {
  std::string out(tag);
  out += " " + a.to_string();
  for (double x : v) out += " " + format_double(x);
  return out + "\n";
}

// "uniform" | "full_tree alpha=..." as a PriorRule.
inline PriorRule parse_prior_words(const Line& l, std::size_t first) {
  if (first >= l.words.size()) throw ParseError(l.number, "missing rule name");
  const std::string& name = l.words[first];
  if (name == "uniform") {
    expect_words(l, first + 1);
    return PriorRule::uniform();
  }
  if (name == "full_tree") {
    expect_words(l, first + 2);
    const double alpha = parse_double(l, keyed(l, first + 1, "alpha"));
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParseError(l.number, "alpha must be in [0, 1]");
    return PriorRule::full_tree(alpha);
  }
  throw ParseError(l.number, "unknown rule '" + name + "'");
}

inline std::string prior_words(const PriorRule& r) {
  if (r.kind == PriorRule::Kind::uniform) return "uniform";
  return "full_tree alpha=" + format_double(r.alpha);
}

// theta lines into a map; returns lines it did not consume.
inline std::vector<const Line*> take_thetas(std::span<const Line> lines, const TreeShape& shape,
                                            std::map<NodeAddress, NodeParam>& thetas) {
  std::vector<const Line*> rest;
  for (const Line& l : lines) {
    if (l.words[0] != "theta") {
      rest.push_back(&l);
      continue;
    }
    if (l.words.size() < 2) throw ParseError(l.number, "theta needs an address");
    const NodeAddress a = parse_address(l, l.words[1], shape);
    std::vector<double> v = parse_vector(l, shape.pattern_count());
    try {
      NodeParam p = NodeParam::from_probs(std::move(v), shape.k_max());
      if (a.depth() == shape.d_max())
        for (std::size_t z = 1; z < p.size(); ++z)
          if (p.at(z) != 0.0) throw DomainError("max-depth node must put all mass on pattern 0");
      if (!thetas.emplace(a, std::move(p)).second)
        throw ParseError(l.number, "duplicate theta for " + a.to_string());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(l.number, e.what());
    }
  }
  return rest;
}

}  // namespace detail

inline std::string write_distribution(const TreeDistribution& dist) {
  std::string out = "kind tree_distribution\n" + detail::shape_line(dist.shape());
  if (std::holds_alternative<UniformRule>(dist.rule()))
    out += "default uniform\n";
  else if (auto* ft = std::get_if<FullTreeRule>(&dist.rule()))
    out += "default full_tree alpha=" + format_double(ft->alpha) + "\n";
  else
    out += "default explicit\n";
  for (const auto& [a, p] : dist.overrides()) out += detail::vector_line("theta", a, p->probs());
  return out;
}

inline TreeDistribution parse_distribution(std::string_view text) {
  const auto lines = detail::tokenize(text);
  auto [shape, body] = detail::parse_head(lines, "tree_distribution");
  if (body.empty() || body[0].words[0] != "default")
    throw ParseError(body.empty() ? lines.back().number + 1 : body[0].number, "expected 'default'");
  const detail::Line& dl = body[0];
  DefaultRule rule;
  if (dl.words.size() >= 2 && dl.words[1] == "explicit") {
    detail::expect_words(dl, 2);
    rule = ExplicitRule{};
  } else {
    const PriorRule r = detail::parse_prior_words(dl, 1);
    if (r.kind == PriorRule::Kind::uniform)
      rule = UniformRule{};
    else
      rule = FullTreeRule{r.alpha};
  }
  std::map<NodeAddress, NodeParam> thetas;
  const auto rest = detail::take_thetas(body.subspan(1), shape, thetas);
  if (!rest.empty())
    throw ParseError(rest[0]->number, "unexpected record '" + rest[0]->words[0] + "'");
  try {
    return TreeDistribution(shape, rule, thetas);
  } catch (const Error& e) {
    throw ParseError(dl.number, e.what());
  }
}

inline std::string write_hyper(const DirichletHyper& h) {
  std::string out = "kind dirichlet_hyper\n" + detail::shape_line(h.shape());
  out += "default constant alpha=" + format_double(h.default_alpha()) + "\n";
  for (const auto& [a, v] : h.overrides()) out += detail::vector_line("alpha", a, v);
  return out;
}

inline DirichletHyper parse_hyper(std::string_view text) {
  const auto lines = detail::tokenize(text);
  auto [shape, body] = detail::parse_head(lines, "dirichlet_hyper");
  if (body.empty() || body[0].words[0] != "default")
    throw ParseError(body.empty() ? lines.back().number + 1 : body[0].number, "expected 'default'");
  const detail::Line& dl = body[0];
  detail::expect_words(dl, 3);
  if (dl.words[1] != "constant") throw ParseError(dl.number, "expected 'default constant alpha=...'");
  const double alpha0 = detail::parse_double(dl, detail::keyed(dl, 2, "alpha"));
  std::optional<DirichletHyper> h;
  try {
    h.emplace(shape, alpha0);
  } catch (const Error& e) {
    throw ParseError(dl.number, e.what());
  }
  for (const detail::Line& l : body.subspan(1)) {
    if (l.words[0] != "alpha") throw ParseError(l.number, "unexpected record '" + l.words[0] + "'");
    if (l.words.size() < 2) throw ParseError(l.number, "alpha needs an address");
    const NodeAddress a = detail::parse_address(l, l.words[1], shape);
    try {
      h->set_alpha(a, detail::parse_vector(l, shape.pattern_count()));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(l.number, e.what());
    }
  }
  return *h;
}

inline std::string write_checkpoint(const ContextTreeModel& m) {
  const TreeShape& shape = m.shape();
  std::string out = "kind context_tree_model\n" + detail::shape_line(shape);
  out += "padding " + std::to_string(m.config().padding) + "\n";
  out += "prior " + detail::prior_words(m.config().prior) + "\n";
  out += "processed " + std::to_string(m.processed()) + "\n";
  for (const auto& [a, p] : m.tree_dist().overrides()) out += detail::vector_line("theta", a, p->probs());
  std::vector<std::pair<NodeAddress, const std::vector<std::uint32_t>*>> counts;
  for (const auto& [n, c] : m.raw_counts()) counts.emplace_back(NodeAddress::from_index(shape, n), &c);
  std::sort(counts.begin(), counts.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [a, c] : counts) {
    out += "counts " + a.to_string();
    for (auto x : *c) out += " " + std::to_string(x);
    out += "\n";
  }
  return out;
}

inline ContextTreeModel parse_checkpoint(std::string_view text) {
  const auto lines = detail::tokenize(text);
  auto [shape, body] = detail::parse_head(lines, "context_tree_model");
  auto need = [&](std::size_t i, std::string_view tag) -> const detail::Line& {
    if (i >= body.size() || body[i].words[0] != tag)
      throw ParseError(i < body.size() ? body[i].number : lines.back().number + 1,
                       "expected '" + std::string(tag) + "'");
    return body[i];
  };
  const detail::Line& pl = need(0, "padding");
  detail::expect_words(pl, 2);
  const auto pad = detail::parse_uint(pl, pl.words[1]);
  if (pad >= shape.k_max()) throw ParseError(pl.number, "padding symbol must be below k_max");
  const detail::Line& rl = need(1, "prior");
  const PriorRule prior = detail::parse_prior_words(rl, 1);
  const detail::Line& nl = need(2, "processed");
  detail::expect_words(nl, 2);
  const auto processed = detail::parse_uint(nl, nl.words[1]);

  std::map<NodeAddress, NodeParam> thetas;
  const auto rest = detail::take_thetas(body.subspan(3), shape, thetas);
  std::unordered_map<NodeIndex, std::vector<std::uint32_t>> counts;
  for (const detail::Line* l : rest) {
    if (l->words[0] != "counts") throw ParseError(l->number, "unexpected record '" + l->words[0] + "'");
    if (l->words.size() < 2) throw ParseError(l->number, "counts needs an address");
    const NodeAddress a = detail::parse_address(*l, l->words[1], shape);
    // one row of k per child below max depth, a single row at max depth
    const unsigned width = a.depth() < shape.d_max() ? shape.k_max() * shape.k_max() : shape.k_max();
    detail::expect_words(*l, width + 2);
    std::vector<std::uint32_t> c(width);
    for (unsigned s = 0; s < width; ++s) {
      const auto v = detail::parse_uint(*l, l->words[s + 2]);
      if (v > UINT32_MAX) throw ParseError(l->number, "count too large");
      c[s] = static_cast<std::uint32_t>(v);
    }
    if (!counts.emplace(a.index(shape), std::move(c)).second)
      throw ParseError(l->number, "duplicate counts for " + a.to_string());
  }
  ModelConfig config{shape, static_cast<Symbol>(pad), prior};
  ContextTreeModel model(config);
  TreeDistribution dist = prior.distribution(shape);
  for (const auto& [a, p] : thetas) dist.set_param(a, p);
  model.restore(std::move(dist), std::move(counts), processed);
  return model;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace roottree::io

#endif  // ROOTTREE_DIST_IO_HPP
