#pragma once

// Static multi-symbol arithmetic coder.
//
// State is a 32-bit base (`low`) and a 32-bit interval length (`range`).
// Probabilities are 16-bit (total 65536) and the length is reduced to its
// top 16 bits before scaling, so every product fits a 32-bit register.
// Renormalization shifts out whole bytes once range < 2^24; a carry out of
// `low` is propagated back into the bytes already written.
//
// The truncation remainder (range - (range >> 16) * 65536) is handed to the
// most probable bin of each table: bins below the MPS are laid out from the
// bottom of the interval, bins above it from the top. Low-entropy tables
// thereby lose nothing to truncation.
//
// Termination writes one byte. The decoder reads four bytes up front and
// treats bytes past the end as zero; a valid stream of N bytes is fully
// decoded after reading exactly N + 3 bytes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mnvc/entropy_model.hpp"
#include "mnvc/error.hpp"

namespace mnvc {

inline constexpr std::uint32_t kRenormThreshold = 1u << 24;
inline constexpr std::size_t kFlushSlack = 3;

namespace detail {

struct Interval {
  std::uint32_t start;
  std::uint32_t size;
};

inline Interval bin_interval(const CdfTable& t, int bin, std::uint32_t range) {
  const std::uint32_t r = range >> kProbBits;
  const std::uint32_t lo = t.cdf[bin], hi = t.cdf[bin + 1];
  if (bin < t.mps) return {r * lo, r * (hi - lo)};
  if (bin > t.mps) return {range - r * (kProbTotal - lo), r * (hi - lo)};
  const std::uint32_t start = r * lo;
  return {start, range - r * (kProbTotal - hi) - start};
}

}  // namespace detail

class ArithmeticEncoder {
 public:
  void encode(int symbol, const CdfTable& table) {
    const int bin = symbol - kSymbolMin;
    const auto iv = detail::bin_interval(table, bin, range_);
    const std::uint32_t old = low_;
    low_ += iv.start;
    if (low_ < old) propagate_carry();
    range_ = iv.size;
    while (range_ < kRenormThreshold) {
      out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
      low_ <<= 8;
      range_ <<= 8;
    }
  }

  // Emits the single terminating byte: the smallest multiple of 2^24 not
  // below `low` always falls inside [low, low + range).
  std::vector<std::uint8_t> finish() && {
    std::uint32_t v = low_;
    if (v & 0x00FFFFFFu) {
      v = (v | 0x00FFFFFFu) + 1u;
      if (v == 0) propagate_carry();
    }
    out_.push_back(static_cast<std::uint8_t>(v >> 24));
    return std::move(out_);
  }

 private:
  void propagate_carry() {
    std::size_t i = out_.size();
    while (i > 0 && out_[i - 1] == 0xFF) out_[--i] = 0;
    require(i > 0, ErrorKind::Corrupt, "carry propagated past start of stream");
    ++out_[i - 1];
  }

  std::uint32_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::vector<std::uint8_t> out_;
};

class ArithmeticDecoder {
 public:
  explicit ArithmeticDecoder(std::span<const std::uint8_t> data) : data_(data) {
    for (int i = 0; i < 4; ++i) value_ = (value_ << 8) | next_byte();
    if (value_ >= range_) fail(ErrorKind::Corrupt, "stream prefix outside the coding interval");
  }

  int decode(const CdfTable& t) {
    const std::uint32_t r = range_ >> kProbBits;
    const std::uint32_t mps_lo = r * t.cdf[t.mps];
    const std::uint32_t mps_hi = range_ - r * (kProbTotal - t.cdf[t.mps + 1]);
    int bin;
    if (value_ < mps_lo) {
      bin = find_bin(t, value_ / r, 0, t.mps);
    } else if (value_ < mps_hi) {
      bin = t.mps;
    } else {
      const std::uint32_t q = (range_ - value_ - 1) / r;
      bin = find_bin(t, kProbTotal - 1 - q, t.mps + 1, kAlphabetSize);
    }
    const auto iv = detail::bin_interval(t, bin, range_);
    value_ -= iv.start;
    range_ = iv.size;
    while (range_ < kRenormThreshold) {
      value_ = (value_ << 8) | next_byte();
      range_ <<= 8;
    }
    return bin + kSymbolMin;
  }

  // Bytes consumed, counting the virtual zero bytes past the end.
  std::size_t consumed() const { return pos_; }
  bool trailing_garbage() const { return pos_ < data_.size() + kFlushSlack; }

 private:
  // Largest bin in [first, last) with cdf[bin] <= target.
  static int find_bin(const CdfTable& t, std::uint32_t target, int first, int last) {
    auto begin = t.cdf.begin() + first + 1;
    auto end = t.cdf.begin() + last;
    return static_cast<int>(std::upper_bound(begin, end, target) - t.cdf.begin()) - 1;
  }

  std::uint32_t next_byte() {
    std::size_t i = pos_++;
    if (i < data_.size()) return data_[i];
    if (i >= data_.size() + kFlushSlack) fail(ErrorKind::Truncated, "coded stream exhausted");
    return 0;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::uint32_t value_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

struct DecodeStatus {
  std::size_t consumed = 0;
  bool trailing_garbage = false;
};

inline void check_coding_inputs(std::size_t symbols, std::span<const std::uint8_t> tables) {
  if (symbols != tables.size()) fail(ErrorKind::Config, "symbol and table-index sequences differ in length");
}

// Symbols are int8 latents; tables[i] is the scale index n for symbol i.
inline std::vector<std::uint8_t> ac_encode(std::span<const std::int8_t> symbols, std::span<const std::uint8_t> tables,
                                           const TableSet& set) {
  check_coding_inputs(symbols.size(), tables);
  ArithmeticEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode(symbols[i], set[tables[i]]);
  return std::move(enc).finish();
}

inline std::vector<std::int8_t> ac_decode(std::span<const std::uint8_t> payload, std::size_t count,
                                          std::span<const std::uint8_t> tables, const TableSet& set,
                                          DecodeStatus* status = nullptr) {
  check_coding_inputs(count, tables);
  ArithmeticDecoder dec(payload);
  std::vector<std::int8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<std::int8_t>(dec.decode(set[tables[i]]));
  if (status) *status = {dec.consumed(), dec.trailing_garbage()};
  return out;
}

// Ideal code length in bits: sum of -log2(mass / 65536).
inline double rate_estimate(std::span<const std::int8_t> symbols, std::span<const std::uint8_t> tables,
                            const TableSet& set) {
  check_coding_inputs(symbols.size(), tables);
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i)
    bits -= std::log2(static_cast<double>(set[tables[i]].symbol_mass(symbols[i])) / kProbTotal);
  return bits;
}

}  // namespace mnvc
