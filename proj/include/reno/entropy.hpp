// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace reno {

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;

/// Quantizes a probability vector into cumulative frequencies summing to
/// 65536 with every symbol at least 1. Writes K + 1 entries into `cum`.
///
/// Frequencies start at max(1, floor(p * 65536)). A deficit is handed out
/// one unit at a time in order of decreasing fractional remainder (lowest
/// index first on ties); a surplus is taken from the most frequent symbol.
void quantize_probs_into(std::span<const float> p, std::span<std::uint32_t> cum);
void quantize_probs_into(std::span<const double> p, std::span<std::uint32_t> cum);

/// Integer cumulative-frequency table over K symbols.
class CdfTable {
public:
  CdfTable() = default;
  explicit CdfTable(std::vector<std::uint32_t> cum);

  std::size_t symbols() const noexcept { return cum_.empty() ? 0 : cum_.size() - 1; }
  std::uint32_t cum(std::size_t s) const { return cum_[s]; }
  std::uint32_t freq(std::size_t s) const { return cum_[s + 1] - cum_[s]; }
  std::span<const std::uint32_t> cumulative() const noexcept { return cum_; }

  /// -log2(freq / 65536).
  double cost_bits(std::size_t s) const;

  friend bool operator==(const CdfTable&, const CdfTable&) = default;

private:
  std::vector<std::uint32_t> cum_;
};

CdfTable quantize_probs(std::span<const double> p);
CdfTable quantize_probs(std::span<const float> p);

/// Carry-propagating range encoder: 64-bit low, 32-bit range, bytewise
/// renormalization, 16-bit frequency totals.
class RangeEncoder {
public:
  void encode(std::uint32_t cum_low, std::uint32_t freq);
  void encode(std::span<const std::uint32_t> cum, int symbol)
  {
    encode(cum[static_cast<std::size_t>(symbol)],
           cum[static_cast<std::size_t>(symbol) + 1] - cum[static_cast<std::size_t>(symbol)]);
  }

  /// Flushes pending state and returns the payload.
  std::vector<std::uint8_t> finish();

private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
  explicit RangeDecoder(std::span<const std::uint8_t> payload);

  /// Decodes one symbol against a K + 1 entry cumulative table.
  int decode(std::span<const std::uint32_t> cum);

  /// Throws CorruptStream unless the payload was consumed exactly and the
  /// flushed tail matches the decoded state.
  void finish() const;

  /// Bytes consumed so far.
  std::size_t position() const noexcept { return pos_; }
  std::size_t size() const noexcept { return in_.size(); }

private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

std::vector<std::uint8_t> range_encode(std::span<const int> symbols,
                                       std::span<const CdfTable> cdfs);

/// Decodes cdfs.size() symbols; throws UnexpectedEof on truncated input and
/// CorruptStream when trailing or inconsistent flush bytes remain.
std::vector<int> range_decode(std::span<const std::uint8_t> payload,
                              std::span<const CdfTable> cdfs);

}  // namespace reno
