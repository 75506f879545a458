// SPDX-License-Identifier: Apache-2.0

#include "reno/entropy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "reno/error.hpp"

namespace reno {

namespace {

constexpr std::uint32_t kTop = 1u << 24;
constexpr std::size_t kStackSymbols = 256;

template <typename T>
void quantize_impl(std::span<const T> p, std::span<std::uint32_t> cum)
{
  const std::size_t k = p.size();
  if (k == 0 || k > kStackSymbols || cum.size() != k + 1)
    throw Error(ErrorKind::InvalidInput, "probability table must have 1..256 entries");
  if (k > kCdfTotal)
    throw Error(ErrorKind::InvalidInput, "too many symbols for the frequency total");

  std::array<std::uint32_t, kStackSymbols> freq{};
  std::array<double, kStackSymbols> rem{};
  std::int64_t total = 0;
  for (std::size_t s = 0; s < k; ++s) {
    const double v = static_cast<double>(p[s]);
    if (!(v >= 0.0) || !std::isfinite(v))
      throw Error(ErrorKind::InvalidProbability, "probability " + std::to_string(v) +
                                                   " at symbol " + std::to_string(s));
    const double scaled = v * static_cast<double>(kCdfTotal);
    const double whole = std::floor(scaled);
    if (whole >= 1.0) {
      freq[s] = static_cast<std::uint32_t>(std::min(whole, static_cast<double>(kCdfTotal)));
      rem[s] = scaled - whole;
    } else {
      freq[s] = 1;
      rem[s] = scaled - 1.0;  // already rounded up, ranks last
    }
    total += freq[s];
  }

  std::int64_t deficit = static_cast<std::int64_t>(kCdfTotal) - total;
  if (deficit > 0) {
    std::array<std::uint16_t, kStackSymbols> order{};
    std::iota(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), std::uint16_t{0});
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
              [&](std::uint16_t a, std::uint16_t b) {
                return rem[a] != rem[b] ? rem[a] > rem[b] : a < b;
              });
    for (std::size_t i = 0; deficit > 0; i = (i + 1) % k, --deficit)
      ++freq[order[i]];
  }
  while (deficit < 0) {
    std::size_t top = 0;
    for (std::size_t s = 1; s < k; ++s)
      if (freq[s] > freq[top])
        top = s;
    const std::int64_t take = std::min<std::int64_t>(-deficit, freq[top] - 1);
    if (take <= 0)
      throw Error(ErrorKind::InvalidProbability, "cannot normalize frequency table");
    freq[top] -= static_cast<std::uint32_t>(take);
    deficit += take;
  }

  cum[0] = 0;
  for (std::size_t s = 0; s < k; ++s)
    cum[s + 1] = cum[s] + freq[s];
}

template <typename T>
CdfTable quantize_table(std::span<const T> p)
{
  std::vector<std::uint32_t> cum(p.size() + 1);
  quantize_impl(p, std::span<std::uint32_t>(cum));
  return CdfTable(std::move(cum));
}

}  // namespace

void quantize_probs_into(std::span<const float> p, std::span<std::uint32_t> cum)
{
  quantize_impl(p, cum);
}

void quantize_probs_into(std::span<const double> p, std::span<std::uint32_t> cum)
{
  quantize_impl(p, cum);
}

CdfTable quantize_probs(std::span<const double> p) { return quantize_table(p); }
CdfTable quantize_probs(std::span<const float> p) { return quantize_table(p); }

CdfTable::CdfTable(std::vector<std::uint32_t> cum) : cum_(std::move(cum))
{
  if (cum_.size() < 2 || cum_.front() != 0 || cum_.back() != kCdfTotal)
    throw Error(ErrorKind::InvalidProbability, "cumulative table must run from 0 to 65536");
  for (std::size_t s = 0; s + 1 < cum_.size(); ++s)
    if (cum_[s + 1] <= cum_[s])
      throw Error(ErrorKind::InvalidProbability, "zero frequency at symbol " + std::to_string(s));
}

double CdfTable::cost_bits(std::size_t s) const
{
  return -std::log2(static_cast<double>(freq(s)) / static_cast<double>(kCdfTotal));
}

// ---------------------------------------------------------------------------

void RangeEncoder::encode(std::uint32_t cum_low, std::uint32_t freq)
{
  const std::uint32_t r = range_ >> kCdfPrecision;
  low_ += static_cast<std::uint64_t>(r) * cum_low;
  range_ = r * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::shift_low()
{
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish()
{
  for (int i = 0; i < 5; ++i)
    shift_low();
  std::vector<std::uint8_t> out = std::move(out_);
  *this = RangeEncoder();
  return out;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> payload) : in_(payload)
{
  // The encoder's first byte is the initial cache, which is always zero.
  if (next_byte() != 0)
    throw Error(ErrorKind::CorruptStream, "range coder payload must start with a zero byte");
  for (int i = 0; i < 4; ++i)
    code_ = (code_ << 8) | next_byte();
}

void RangeDecoder::finish() const
{
  if (pos_ != in_.size())
    throw Error(ErrorKind::CorruptStream,
                std::to_string(in_.size() - pos_) + " unread payload bytes");
  // The flush writes the final low exactly, so the offset from it is zero.
  if (code_ != 0)
    throw Error(ErrorKind::CorruptStream, "range coder flush does not match the decoded state");
}

std::uint8_t RangeDecoder::next_byte()
{
  if (pos_ >= in_.size())
    throw Error(ErrorKind::UnexpectedEof, "range decoder ran past " +
                                            std::to_string(in_.size()) + " payload bytes");
  return in_[pos_++];
}

int RangeDecoder::decode(std::span<const std::uint32_t> cum)
{
  const std::uint32_t r = range_ >> kCdfPrecision;
  const std::uint32_t value = code_ / r;
  if (value >= kCdfTotal)
    throw Error(ErrorKind::CorruptStream, "range decoder state out of bounds");

  // first s with cum[s + 1] > value
  const auto it = std::upper_bound(cum.begin() + 1, cum.end(), value);
  const int s = static_cast<int>(it - cum.begin()) - 1;
  const std::uint32_t lo = cum[static_cast<std::size_t>(s)];
  code_ -= r * lo;
  range_ = r * (cum[static_cast<std::size_t>(s) + 1] - lo);
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return s;
}

std::vector<std::uint8_t> range_encode(std::span<const int> symbols,
                                       std::span<const CdfTable> cdfs)
{
  if (symbols.size() != cdfs.size())
    throw Error(ErrorKind::InvalidInput, "one table per symbol required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] < 0 || static_cast<std::size_t>(symbols[i]) >= cdfs[i].symbols())
      throw Error(ErrorKind::InvalidInput, "symbol outside its table");
    enc.encode(cdfs[i].cumulative(), symbols[i]);
  }
  return enc.finish();
}

std::vector<int> range_decode(std::span<const std::uint8_t> payload,
                              std::span<const CdfTable> cdfs)
{
  RangeDecoder dec(payload);
  std::vector<int> out;
  out.reserve(cdfs.size());
  for (const CdfTable& t : cdfs)
    out.push_back(dec.decode(t.cumulative()));
  dec.finish();
  return out;
}

}  // namespace reno
