#ifndef ROOTTREE_ARITHMETIC_CODER_HPP
#define ROOTTREE_ARITHMETIC_CODER_HPP

// Binary arithmetic coder with 62-bit low/high registers in 64-bit state.
// Carries are resolved with pending (follow) bits, output is MSB-first, and
// the flush emits two bits plus pending bits. Interval arithmetic uses
// 128-bit products, so a 16-bit frequency table never truncates the range
// by more than 2^-44 relative.
//
// The decoder mirrors the encoder's register updates exactly, which lets it
// check at the end that the stream has exactly the length and final bits
// the encoder would have produced.

#include <cstdint>
#include <span>
#include <vector>

#include "roottree/error.hpp"

namespace roottree::coder {

inline constexpr unsigned kPrecision = 62;
inline constexpr std::uint64_t kTop = (std::uint64_t{1} << kPrecision) - 1;
inline constexpr std::uint64_t kHalf = std::uint64_t{1} << (kPrecision - 1);
inline constexpr std::uint64_t kQuarter = std::uint64_t{1} << (kPrecision - 2);

__extension__ typedef unsigned __int128 u128;

class BitWriter {
 public:
  void put(bool bit) {
    if (fill_ == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> fill_);
    fill_ = (fill_ + 1) & 7u;
    ++bits_;
  }

  std::uint64_t bit_count() const noexcept { return bits_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  unsigned fill_ = 0;
  std::uint64_t bits_ = 0;
};

// Reads zeros past the end.
class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool get() {
    const std::uint64_t byte = pos_ >> 3;
    bool bit = false;
    if (byte < bytes_.size()) bit = (bytes_[byte] >> (7 - (pos_ & 7u))) & 1u;
    ++pos_;
    return bit;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

class Encoder {
 public:
  // Codes the interval [cum_low, cum_high) out of `total`.
  void encode(std::uint32_t cum_low, std::uint32_t cum_high, std::uint32_t total) {
    const u128 range = u128{high_ - low_} + 1;
    high_ = low_ + static_cast<std::uint64_t>(range * cum_high / total) - 1;
    low_ = low_ + static_cast<std::uint64_t>(range * cum_low / total);
    for (;;) {
      if (high_ < kHalf) {
        emit(false);
      } else if (low_ >= kHalf) {
        emit(true);
        low_ -= kHalf;
        high_ -= kHalf;
      } else if (low_ >= kQuarter && high_ < kHalf + kQuarter) {
        ++pending_;
        low_ -= kQuarter;
        high_ -= kQuarter;
      } else {
        break;
      }
      low_ <<= 1;
      high_ = (high_ << 1) | 1u;
    }
  }

  // Emits the final bits and returns the payload.
  std::vector<std::uint8_t> finish() {
    ++pending_;
    emit(low_ >= kQuarter);
    return out_.take();
  }

  std::uint64_t bit_count() const noexcept { return out_.bit_count(); }

 private:
  void emit(bool bit) {
    out_.put(bit);
    for (; pending_ > 0; --pending_) out_.put(!bit);
  }

  std::uint64_t low_ = 0;
  std::uint64_t high_ = kTop;
  std::uint64_t pending_ = 0;
  BitWriter out_;
};

class Decoder {
 public:
  explicit Decoder(std::span<const std::uint8_t> payload) : payload_size_(payload.size()), in_(payload) {
    for (unsigned i = 0; i < kPrecision; ++i) value_ = (value_ << 1) | (in_.get() ? 1u : 0u);
  }

  // Cumulative count in [0, total) identifying the next symbol.
  std::uint32_t target(std::uint32_t total) const {
    const u128 range = u128{high_ - low_} + 1;
    const u128 offset = u128{value_ - low_} + 1;
    const u128 t = (offset * total - 1) / range;
    if (value_ < low_ || value_ > high_ || t >= total)
      throw CodecError("corrupt payload: code value left the coding interval");
    return static_cast<std::uint32_t>(t);
  }

  void consume(std::uint32_t cum_low, std::uint32_t cum_high, std::uint32_t total) {
    const u128 range = u128{high_ - low_} + 1;
    high_ = low_ + static_cast<std::uint64_t>(range * cum_high / total) - 1;
    low_ = low_ + static_cast<std::uint64_t>(range * cum_low / total);
    for (;;) {
      // The code value never leaves the interval on a valid stream, so every
      // bit shifted out is checked against the encoder's.
      if (value_ < low_ || value_ > high_)
        throw CodecError("corrupt payload: code value left the coding interval");
      if (high_ < kHalf) {
      } else if (low_ >= kHalf) {
        low_ -= kHalf;
        high_ -= kHalf;
        value_ -= kHalf;
      } else if (low_ >= kQuarter && high_ < kHalf + kQuarter) {
        low_ -= kQuarter;
        high_ -= kQuarter;
        value_ -= kQuarter;
      } else {
        break;
      }
      low_ <<= 1;
      high_ = (high_ << 1) | 1u;
      value_ = (value_ << 1) | (in_.get() ? 1u : 0u);
      // A valid stream holds every encoder bit: shifts + 2 <= 8 * size.
      if (++shifts_ + 2 > payload_size_ * 8) throw CodecError("truncated payload");
    }
  }

  // Throws unless the payload is exactly what the encoder would have
  // written for the symbols decoded so far.
  void finish() const {
    const std::uint64_t bits = shifts_ + 2;
    const std::uint64_t bytes = (bits + 7) / 8;
    if (payload_size_ < bytes) throw CodecError("truncated payload");
    if (payload_size_ > bytes) throw CodecError("trailing bytes after payload");
    const std::uint64_t expect = low_ < kQuarter ? kQuarter : kHalf;
    if (value_ != expect) throw CodecError("corrupt payload: final bits do not match");
  }

 private:
  std::size_t payload_size_;
  BitReader in_;
  std::uint64_t low_ = 0;
  std::uint64_t high_ = kTop;
  std::uint64_t value_ = 0;
  std::uint64_t shifts_ = 0;
};

}  // namespace roottree::coder

#endif  // ROOTTREE_ARITHMETIC_CODER_HPP
