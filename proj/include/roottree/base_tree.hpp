#ifndef ROOTTREE_BASE_TREE_HPP
#define ROOTTREE_BASE_TREE_HPP

// Geometry of the perfect k-ary base tree, node addressing, rooted subtrees
// and the exhaustive subtree enumerator.
//
// Nodes are never materialized. A node is named by its path from the root
// (NodeAddress) or, equivalently, by its heap index: root = 0 and the
// children of node n are k*n + 1 ... k*n + k. Every per-node table in the
// library is indexed by heap index.

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "roottree/error.hpp"

namespace roottree {

using NodeIndex = std::uint64_t;

// Shape (k_max, d_max) of the perfect base tree.
class TreeShape {
 public:
  // Pattern tables hold 2^k_max entries per node.
  static constexpr unsigned kMaxBranching = 16;

  TreeShape(unsigned k_max, unsigned d_max) : k_(k_max), d_(d_max) {
    if (k_ < 1 || k_ > kMaxBranching)
      throw StructuralError("k_max must be in [1, " +
                            std::to_string(kMaxBranching) + "], got " +
                            std::to_string(k_));
    if (d_ < 1) throw StructuralError("d_max must be at least 1");
    // Heap indices must fit comfortably in 64 bits.
    constexpr std::uint64_t limit = std::uint64_t{1} << 62;
    std::uint64_t level = 1, total = 1;
    for (unsigned t = 1; t <= d_; ++t) {
      if (level > limit / k_)
        throw StructuralError("base tree too large for 64-bit node indices");
      level *= k_;
      total += level;
      if (total > limit)
        throw StructuralError("base tree too large for 64-bit node indices");
    }
    node_count_ = total;
    leaf_count_ = level;
  }

  unsigned k_max() const noexcept { return k_; }
  unsigned d_max() const noexcept { return d_; }
  std::uint32_t pattern_count() const noexcept { return std::uint32_t{1} << k_; }

  std::uint64_t node_count() const noexcept { return node_count_; }
  std::uint64_t leaf_count() const noexcept { return leaf_count_; }
  std::uint64_t inner_count() const noexcept { return node_count_ - leaf_count_; }

  // Index of the first node at the given depth.
  NodeIndex level_begin(unsigned depth) const noexcept {
    NodeIndex begin = 0, width = 1;
    for (unsigned t = 0; t < depth; ++t) {
      begin += width;
      width *= k_;
    }
    return begin;
  }

  NodeIndex child_index(NodeIndex n, unsigned j) const noexcept {
    return n * k_ + 1 + j;
  }

  bool is_leaf_index(NodeIndex n) const noexcept { return n >= node_count_ - leaf_count_; }

  friend bool operator==(const TreeShape&, const TreeShape&) = default;

 private:
  unsigned k_;
  unsigned d_;
  std::uint64_t node_count_ = 0;
  std::uint64_t leaf_count_ = 0;
};

// Path of child indices from the root; the empty path is the root.
class NodeAddress {
 public:
  NodeAddress() = default;
  explicit NodeAddress(std::vector<unsigned> path) : path_(std::move(path)) {}
  NodeAddress(std::initializer_list<unsigned> path) : path_(path) {}

  static NodeAddress root() { return {}; }

  unsigned depth() const noexcept { return static_cast<unsigned>(path_.size()); }
  bool is_root() const noexcept { return path_.empty(); }
  const std::vector<unsigned>& path() const noexcept { return path_; }
  unsigned operator[](std::size_t i) const { return path_[i]; }

  NodeAddress child(unsigned j) const {
    NodeAddress out = *this;
    out.path_.push_back(j);
    return out;
  }

  // True if this address is an ancestor of `other` or equal to it.
  bool is_prefix_of(const NodeAddress& other) const {
    return path_.size() <= other.path_.size() &&
           std::equal(path_.begin(), path_.end(), other.path_.begin());
  }

  bool valid_for(const TreeShape& shape) const {
    return depth() <= shape.d_max() &&
           std::all_of(path_.begin(), path_.end(),
                       [&](unsigned j) { return j < shape.k_max(); });
  }

  NodeIndex index(const TreeShape& shape) const {
    if (!valid_for(shape))
      throw StructuralError("address " + to_string() + " is outside the base tree");
    NodeIndex n = 0;
    for (unsigned j : path_) n = shape.child_index(n, j);
    return n;
  }

  static NodeAddress from_index(const TreeShape& shape, NodeIndex n) {
    if (n >= shape.node_count())
      throw StructuralError("node index " + std::to_string(n) + " is outside the base tree");
    std::vector<unsigned> path;
    const unsigned k = shape.k_max();
    while (n > 0) {
      path.push_back(static_cast<unsigned>((n - 1) % k));
      n = (n - 1) / k;
    }
    std::reverse(path.begin(), path.end());
    return NodeAddress(std::move(path));
  }

  // Dot-separated indices, "-" for the root.
  std::string to_string() const {
    if (path_.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < path_.size(); ++i) {
      if (i) out += '.';
      out += std::to_string(path_[i]);
    }
    return out;
  }

  static NodeAddress parse(std::string_view text) {
    if (text == "-") return {};
    if (text.empty()) throw StructuralError("empty node address");
    std::vector<unsigned> path;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t dot = text.find('.', pos);
      if (dot == std::string_view::npos) dot = text.size();
      std::string_view part = text.substr(pos, dot - pos);
      if (part.empty() || part.size() > 5 ||
          !std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw StructuralError("malformed node address '" + std::string(text) + "'");
      path.push_back(static_cast<unsigned>(std::stoul(std::string(part))));
      pos = dot + 1;
    }
    return NodeAddress(std::move(path));
  }

  friend auto operator<=>(const NodeAddress&, const NodeAddress&) = default;
  friend bool operator==(const NodeAddress&, const NodeAddress&) = default;

 private:
  std::vector<unsigned> path_;
};

// k_max-bit vector; bit j set iff child j is present. The pattern index is
// the integer value of the vector with child 0 as the least significant bit.
class EdgePattern {
 public:
  constexpr EdgePattern() = default;
  constexpr explicit EdgePattern(std::uint32_t bits) : bits_(bits) {}

  static constexpr EdgePattern zero() { return EdgePattern{}; }
  static constexpr EdgePattern all(unsigned k) {
    return EdgePattern{(std::uint32_t{1} << k) - 1};
  }

  constexpr std::uint32_t bits() const noexcept { return bits_; }
  constexpr std::uint32_t index() const noexcept { return bits_; }
  constexpr bool is_zero() const noexcept { return bits_ == 0; }
  constexpr bool test(unsigned j) const noexcept { return (bits_ >> j) & 1u; }
  constexpr unsigned popcount() const noexcept { return std::popcount(bits_); }

  constexpr EdgePattern with(unsigned j) const noexcept { return EdgePattern{bits_ | (1u << j)}; }

  // Character j is bit j, so "10" for k_max = 2 is child 0 only.
  std::string to_string(unsigned k) const {
    std::string out(k, '0');
    for (unsigned j = 0; j < k; ++j)
      if (test(j)) out[j] = '1';
    return out;
  }

  static EdgePattern parse(std::string_view text, unsigned k) {
    if (text.size() != k)
      throw StructuralError("pattern '" + std::string(text) + "' must have exactly " +
                            std::to_string(k) + " bits");
    std::uint32_t bits = 0;
    for (unsigned j = 0; j < k; ++j) {
      if (text[j] == '1')
        bits |= 1u << j;
      else if (text[j] != '0')
        throw StructuralError("pattern '" + std::string(text) + "' is not a bit string");
    }
    return EdgePattern{bits};
  }

  friend constexpr auto operator<=>(EdgePattern, EdgePattern) = default;

 private:
  std::uint32_t bits_ = 0;
};

// Lexicographic order on the bit vector (z_0, z_1, ..., z_{k-1}).
inline constexpr bool lex_less(EdgePattern a, EdgePattern b) noexcept {
  const std::uint32_t diff = a.bits() ^ b.bits();
  if (diff == 0) return false;
  return !a.test(static_cast<unsigned>(std::countr_zero(diff)));
}

inline NodeAddress parent(const NodeAddress& addr) {
  if (addr.is_root()) throw StructuralError("root has no parent");
  std::vector<unsigned> path = addr.path();
  path.pop_back();
  return NodeAddress(std::move(path));
}

struct PathEdge {
  NodeAddress from;
  unsigned child;
  friend bool operator==(const PathEdge&, const PathEdge&) = default;
};

// path_edges: (ancestor, chosen child) pairs in root-to-node order.
inline std::vector<PathEdge> path_edges(const NodeAddress& addr) {
  std::vector<PathEdge> out;
  out.reserve(addr.depth());
  std::vector<unsigned> prefix;
  for (unsigned j : addr.path()) {
    out.push_back({NodeAddress(prefix), j});
    prefix.push_back(j);
  }
  return out;
}

// A realization tau: closed node -> pattern map rooted at the base-tree root.
class RootedSubtree {
 public:
  using NodeMap = std::map<NodeAddress, EdgePattern>;

  RootedSubtree() = default;
  explicit RootedSubtree(NodeMap nodes) : nodes_(std::move(nodes)) {}

  static RootedSubtree root_only() { return RootedSubtree(NodeMap{{NodeAddress{}, EdgePattern{}}}); }

  const NodeMap& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool contains(const NodeAddress& a) const { return nodes_.count(a) != 0; }

  std::optional<EdgePattern> pattern(const NodeAddress& a) const {
    auto it = nodes_.find(a);
    if (it == nodes_.end()) return std::nullopt;
    return it->second;
  }

  void set(const NodeAddress& a, EdgePattern z) { nodes_[a] = z; }

  std::vector<NodeAddress> leaves() const {
    std::vector<NodeAddress> out;
    for (const auto& [a, z] : nodes_)
      if (z.is_zero()) out.push_back(a);
    return out;
  }

  std::vector<NodeAddress> inner_nodes() const {
    std::vector<NodeAddress> out;
    for (const auto& [a, z] : nodes_)
      if (!z.is_zero()) out.push_back(a);
    return out;
  }

  // One "address:bitstring" line per node in address order.
  std::string to_text(unsigned k) const {
    std::string out;
    for (const auto& [a, z] : nodes_) {
      out += a.to_string();
      out += ':';
      out += z.to_string(k);
      out += '\n';
    }
    return out;
  }

  static RootedSubtree parse_text(std::string_view text, unsigned k) {
    NodeMap nodes;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      auto last = line.find_last_not_of(" \t\r");
      std::string_view body = std::string_view(line).substr(first, last - first + 1);
      auto colon = body.find(':');
      if (colon == std::string_view::npos)
        throw ParseError(lineno, "expected 'address:bitstring'");
      try {
        NodeAddress a = NodeAddress::parse(body.substr(0, colon));
        EdgePattern z = EdgePattern::parse(body.substr(colon + 1), k);
        if (!nodes.emplace(a, z).second)
          throw ParseError(lineno, "duplicate node " + a.to_string());
      } catch (const StructuralError& e) {
        throw ParseError(lineno, e.what());
      }
    }
    return RootedSubtree(std::move(nodes));
  }

  friend bool operator==(const RootedSubtree&, const RootedSubtree&) = default;

 private:
  NodeMap nodes_;
};

struct Violation {
  enum class Kind { missing_root, bad_address, bad_pattern, closure, leaf_pattern };
  Kind kind;
  NodeAddress where;
  std::string message;
};

// validate_subtree: nullopt when every invariant holds, otherwise the
// first violated one.
inline std::optional<Violation> validate_subtree(const TreeShape& shape,
                                                 const RootedSubtree& tree) {
  using K = Violation::Kind;
  if (!tree.contains(NodeAddress::root()))
    return Violation{K::missing_root, {}, "root node is missing"};
  for (const auto& [a, z] : tree.nodes()) {
    if (!a.valid_for(shape))
      return Violation{K::bad_address, a, "address " + a.to_string() + " is outside the base tree"};
    if (z.bits() >= shape.pattern_count())
      return Violation{K::bad_pattern, a, "pattern at " + a.to_string() + " has bits beyond k_max"};
    if (a.depth() == shape.d_max() && !z.is_zero())
      return Violation{K::leaf_pattern, a,
                       "node " + a.to_string() + " at maximum depth has a nonzero pattern"};
  }
  for (const auto& [a, z] : tree.nodes()) {
    for (unsigned j = 0; j < shape.k_max(); ++j)
      if (z.test(j) && !tree.contains(a.child(j)))
        return Violation{K::closure, a,
                         "closure: child " + a.child(j).to_string() + " is missing"};
    if (!a.is_root()) {
      auto pz = tree.pattern(parent(a));
      if (!pz)
        return Violation{K::closure, a, "closure: parent of " + a.to_string() + " is missing"};
      if (!pz->test(a.path().back()))
        return Violation{K::closure, a,
                         "closure: " + a.to_string() + " present but its parent's bit is 0"};
    }
  }
  return std::nullopt;
}

inline void require_valid(const TreeShape& shape, const RootedSubtree& tree) {
  if (auto v = validate_subtree(shape, tree)) throw StructuralError(v->message);
}

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

// Number of rooted subtrees, N(0) = 1 and N(h) = (1 + N(h-1))^k, saturating
// at uint64 max.
inline std::uint64_t subtree_count(const TreeShape& shape) {
  constexpr std::uint64_t sat = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t n = 1;
  for (unsigned h = 1; h <= shape.d_max(); ++h) {
    const std::uint64_t base = n == sat ? sat : n + 1;
    std::uint64_t acc = 1;
    for (unsigned j = 0; j < shape.k_max(); ++j) {
      if (base != 0 && acc > sat / base) {
        acc = sat;
        break;
      }
      acc *= base;
    }
    n = acc;
  }
  return n;
}

namespace detail {

// Subtree shape relative to its own root; (relative path, pattern) pairs in
// preorder.
using RelativeTree = std::vector<std::pair<std::vector<unsigned>, EdgePattern>>;

// All relative subtrees of every height below `max_height`, in enumeration
// order: ascending pattern index at the root, then an odometer over the
// present children with the highest child index varying fastest.
inline std::vector<std::vector<RelativeTree>> relative_trees(unsigned k, unsigned max_height) {
  std::vector<std::vector<RelativeTree>> by_height(max_height);
  if (max_height == 0) return by_height;
  by_height[0].push_back(RelativeTree{{{}, EdgePattern{}}});
  for (unsigned h = 1; h < max_height; ++h) {
    const auto& below = by_height[h - 1];
    auto& out = by_height[h];
    for (std::uint32_t z = 0; z < (std::uint32_t{1} << k); ++z) {
      std::vector<unsigned> kids;
      for (unsigned j = 0; j < k; ++j)
        if ((z >> j) & 1u) kids.push_back(j);
      std::vector<std::size_t> pick(kids.size(), 0);
      while (true) {
        RelativeTree t{{{}, EdgePattern{z}}};
        for (std::size_t c = 0; c < kids.size(); ++c)
          for (const auto& [rel, pz] : below[pick[c]]) {
            std::vector<unsigned> p{kids[c]};
            p.insert(p.end(), rel.begin(), rel.end());
            t.emplace_back(std::move(p), pz);
          }
        out.push_back(std::move(t));
        std::size_t c = kids.size();
        while (c > 0 && ++pick[c - 1] == below.size()) pick[--c] = 0;
        if (c == 0) break;
      }
    }
  }
  return by_height;
}

}  // namespace detail

// enumerate_subtrees as a stream: calls `visit` once per subtree in the
// documented order. Throws DomainError naming the count when it exceeds cap.
inline void for_each_subtree(const TreeShape& shape,
                             const std::function<void(const RootedSubtree&)>& visit,
                             std::uint64_t cap = kDefaultEnumerationCap) {
  const std::uint64_t count = subtree_count(shape);
  if (count > cap)
    throw DomainError("enumeration of " + std::to_string(count) +
                      " subtrees exceeds the cap of " + std::to_string(cap));
  const unsigned k = shape.k_max();
  const auto below = detail::relative_trees(k, shape.d_max());
  const auto& children = below[shape.d_max() - 1];
  for (std::uint32_t z = 0; z < shape.pattern_count(); ++z) {
    std::vector<unsigned> kids;
    for (unsigned j = 0; j < k; ++j)
      if ((z >> j) & 1u) kids.push_back(j);
    std::vector<std::size_t> pick(kids.size(), 0);
    while (true) {
      RootedSubtree::NodeMap nodes{{NodeAddress{}, EdgePattern{z}}};
      for (std::size_t c = 0; c < kids.size(); ++c)
        for (const auto& [rel, pz] : children[pick[c]]) {
          std::vector<unsigned> p{kids[c]};
          p.insert(p.end(), rel.begin(), rel.end());
          nodes.emplace(NodeAddress(std::move(p)), pz);
        }
      visit(RootedSubtree(std::move(nodes)));
      std::size_t c = kids.size();
      while (c > 0 && ++pick[c - 1] == children.size()) pick[--c] = 0;
      if (c == 0) break;
    }
  }
}

inline std::vector<RootedSubtree> enumerate_subtrees(const TreeShape& shape,
                                                     std::uint64_t cap = kDefaultEnumerationCap) {
  std::vector<RootedSubtree> out;
  for_each_subtree(shape, [&](const RootedSubtree& t) { out.push_back(t); }, cap);
  return out;
}

}  // namespace roottree

#endif  // ROOTTREE_BASE_TREE_HPP
