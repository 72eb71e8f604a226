#ifndef ROOTTREE_CODEC_HPP
#define ROOTTREE_CODEC_HPP

// Lossless sequential codec driven by the context-tree Bayes mixture.
//
// Stream layout:
//   "GCTB1"                      5 bytes
//   k_max                        1 byte
//   d_max                        1 byte
//   sequence length              8 bytes, little-endian
//   padding symbol               1 byte
//   prior rule id                1 byte (0 = uniform, 1 = full_tree)
//   rule parameter               8 bytes, little-endian IEEE-754 (full_tree only)
//   payload                      arithmetic-coded bits, MSB first
//
// Each predictive vector is quantized to 16-bit frequencies,
//   f_a = 1 + floor(p_a * (65536 - k_max)),
// and the remaining 65536 - sum f_a goes to the most probable symbol
// (lowest index on ties). An empty sequence has no payload.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "roottree/arithmetic_coder.hpp"
#include "roottree/context_tree.hpp"
#include "roottree/error.hpp"

namespace roottree {

inline constexpr std::array<char, 5> kCodecMagic{'G', 'C', 'T', 'B', '1'};
inline constexpr std::uint32_t kFrequencyTotal = 1u << 16;

struct CodecHeader {
  ModelConfig config;
  std::uint64_t length = 0;
};

struct Bitstream {
  CodecHeader header;
  std::vector<std::uint8_t> payload;

  // Stored payload size in bits (whole bytes).
  std::uint64_t payload_bits() const noexcept { return payload.size() * 8ull; }

  std::vector<std::uint8_t> to_bytes() const;
};

// Called once per coded position with the predictive vector in use; encoder
// and decoder traces must agree exactly.
using CodecTrace = std::function<void(std::size_t position, std::span<const double> predictive)>;

// Cumulative frequencies, size k + 1, back() == kFrequencyTotal.
inline std::vector<std::uint32_t> quantize_frequencies(std::span<const double> p) {
  const std::size_t k = p.size();
  std::vector<std::uint32_t> f(k);
  const double scale = static_cast<double>(kFrequencyTotal - k);
  std::uint32_t sum = 0;
  std::size_t best = 0;
  for (std::size_t a = 0; a < k; ++a) {
    const double pa = std::clamp(p[a], 0.0, 1.0);
    f[a] = 1u + static_cast<std::uint32_t>(std::floor(pa * scale));
    sum += f[a];
    if (p[a] > p[best]) best = a;
  }
  if (sum > kFrequencyTotal) throw CodecError("predictive vector sums above 1");
  f[best] += kFrequencyTotal - sum;
  std::vector<std::uint32_t> cum(k + 1, 0);
  for (std::size_t a = 0; a < k; ++a) cum[a + 1] = cum[a] + f[a];
  return cum;
}

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, unsigned bytes) {
  for (unsigned i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t& pos, unsigned bytes) {
  if (in.size() < pos + bytes) throw CodecError("truncated header");
  std::uint64_t v = 0;
  for (unsigned i = 0; i < bytes; ++i) v |= std::uint64_t{in[pos + i]} << (8 * i);
  pos += bytes;
  return v;
}

inline void check_sequence(const ModelConfig& config, std::span<const Symbol> seq) {
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq[i] >= config.shape.k_max())
      throw DomainError("symbol " + std::to_string(seq[i]) + " at position " + std::to_string(i) +
                        " is outside the alphabet of size " +
                        std::to_string(config.shape.k_max()));
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_header(const CodecHeader& h) {
  std::vector<std::uint8_t> out(kCodecMagic.begin(), kCodecMagic.end());
  const auto& c = h.config;
  if (c.shape.k_max() > 255 || c.shape.d_max() > 255)
    throw CodecError("shape does not fit the header");
  detail::put_le(out, c.shape.k_max(), 1);
  detail::put_le(out, c.shape.d_max(), 1);
  detail::put_le(out, h.length, 8);
  detail::put_le(out, c.padding, 1);
  detail::put_le(out, static_cast<std::uint8_t>(c.prior.kind), 1);
  if (c.prior.kind == PriorRule::Kind::full_tree)
    detail::put_le(out, std::bit_cast<std::uint64_t>(c.prior.alpha), 8);
  return out;
}

// Parses the header and returns it with the payload offset.
inline std::pair<CodecHeader, std::size_t> decode_header(std::span<const std::uint8_t> in) {
  if (in.size() < kCodecMagic.size() ||
      !std::equal(kCodecMagic.begin(), kCodecMagic.end(), in.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
    throw CodecError("bad magic: not a GCTB1 stream");
  std::size_t pos = kCodecMagic.size();
  const auto k = static_cast<unsigned>(detail::get_le(in, pos, 1));
  const auto d = static_cast<unsigned>(detail::get_le(in, pos, 1));
  const std::uint64_t length = detail::get_le(in, pos, 8);
  const auto pad = static_cast<Symbol>(detail::get_le(in, pos, 1));
  const auto rule = detail::get_le(in, pos, 1);
  PriorRule prior;
  if (rule == 0) {
    prior = PriorRule::uniform();
  } else if (rule == 1) {
    const double alpha = std::bit_cast<double>(detail::get_le(in, pos, 8));
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw CodecError("header: full_tree alpha out of range");
    prior = PriorRule::full_tree(alpha);
  } else {
    throw CodecError("header: unknown prior rule id " + std::to_string(rule));
  }
  try {
    CodecHeader h{ModelConfig{TreeShape(k, d), pad, prior}, length};
    if (pad >= k) throw CodecError("header: padding symbol outside the alphabet");
    return {h, pos};
  } catch (const StructuralError& e) {
    throw CodecError(std::string("header: ") + e.what());
  }
}

inline std::vector<std::uint8_t> Bitstream::to_bytes() const {
  std::vector<std::uint8_t> out = encode_header(header);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

// ideal_codelength in bits.
inline double ideal_codelength(const ModelConfig& config, std::span<const Symbol> seq) {
  double bits = 0.0;
  for (double b : symbol_codelengths(config, seq)) bits += b;
  return bits;
}

inline Bitstream encode(const ModelConfig& config, std::span<const Symbol> seq,
                        const CodecTrace& trace = {}) {
  detail::check_sequence(config, seq);
  Bitstream out{{config, seq.size()}, {}};
  if (seq.empty()) return out;
  ContextTreeModel model(config);
  coder::Encoder enc;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const std::vector<double> p = model.predictive_distribution(seq, i + 1);
    if (trace) trace(i, p);
    const auto cum = quantize_frequencies(p);
    enc.encode(cum[seq[i]], cum[seq[i] + 1], kFrequencyTotal);
    model.update(seq, i + 1, seq[i]);
  }
  out.payload = enc.finish();
  return out;
}

inline std::vector<std::uint8_t> encode_bytes(const ModelConfig& config,
                                              std::span<const Symbol> seq) {
  return encode(config, seq).to_bytes();
}

struct Decoded {
  CodecHeader header;
  std::vector<Symbol> symbols;
};

// Longest sequence the decoder accepts from a header.
inline constexpr std::uint64_t kMaxDecodeLength = std::uint64_t{1} << 32;

inline Decoded decode(std::span<const std::uint8_t> stream, const CodecTrace& trace = {}) {
  auto [header, offset] = decode_header(stream);
  const auto payload = stream.subspan(offset);
  Decoded out{header, {}};
  if (header.length == 0) {
    if (!payload.empty()) throw CodecError("trailing bytes after payload");
    return out;
  }
  if (header.length > kMaxDecodeLength) throw CodecError("header: sequence length too large");
  const ModelConfig& config = header.config;
  const unsigned k = config.shape.k_max();
  ContextTreeModel model(config);
  coder::Decoder dec(payload);
  out.symbols.reserve(static_cast<std::size_t>(header.length));
  for (std::size_t i = 0; i < header.length; ++i) {
    const std::vector<double> p = model.predictive_distribution(out.symbols, i + 1);
    if (trace) trace(i, p);
    const auto cum = quantize_frequencies(p);
    const std::uint32_t t = dec.target(kFrequencyTotal);
    const auto sym = static_cast<unsigned>(std::upper_bound(cum.begin(), cum.end(), t) - cum.begin() - 1);
    if (sym >= k) throw CodecError("corrupt payload");
    dec.consume(cum[sym], cum[sym + 1], kFrequencyTotal);
    out.symbols.push_back(static_cast<Symbol>(sym));
    model.update(out.symbols, i + 1, static_cast<Symbol>(sym));
  }
  dec.finish();
  return out;
}

}  // namespace roottree

#endif  // ROOTTREE_CODEC_HPP
