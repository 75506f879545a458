// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace reno {

/// Deepest supported lattice; 3 * 21 bits fit one 64-bit Morton key.
inline constexpr int kMaxDepth = 21;

struct Coord {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t z = 0;

  friend bool operator==(const Coord&, const Coord&) = default;
};

using MortonKey = std::uint64_t;

namespace detail {

constexpr std::uint64_t spread_bits(std::uint64_t v)
{
  v &= 0x1fffff;
  v = (v | (v << 32)) & 0x001f00000000ffffULL;
  v = (v | (v << 16)) & 0x001f0000ff0000ffULL;
  v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
  v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
  v = (v | (v << 2)) & 0x1249249249249249ULL;
  return v;
}

constexpr std::uint32_t compact_bits(std::uint64_t v)
{
  v &= 0x1249249249249249ULL;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
  v = (v ^ (v >> 8)) & 0x001f0000ff0000ffULL;
  v = (v ^ (v >> 16)) & 0x001f00000000ffffULL;
  v = (v ^ (v >> 32)) & 0x1fffff;
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

/// Interleaves bits so that within each triplet z is the most significant,
/// then y, then x. The low three bits of a key are therefore the octant
/// x + 2y + 4z of the voxel inside its parent.
constexpr MortonKey morton_encode(const Coord& c)
{
  return detail::spread_bits(c.x) | (detail::spread_bits(c.y) << 1) |
         (detail::spread_bits(c.z) << 2);
}

constexpr Coord morton_decode(MortonKey key)
{
  return {detail::compact_bits(key), detail::compact_bits(key >> 1),
          detail::compact_bits(key >> 2)};
}

/// The canonical order used for every coordinate sequence in the codec.
inline std::strong_ordering canonical_order(const Coord& a, const Coord& b)
{
  return morton_encode(a) <=> morton_encode(b);
}

struct CanonicalLess {
  bool operator()(const Coord& a, const Coord& b) const
  {
    return morton_encode(a) < morton_encode(b);
  }
};

/// Occupied lattice cells at one depth, strictly increasing in canonical order.
class SparseGeometry {
public:
  SparseGeometry() = default;

  /// Takes ownership of already canonical coordinates; validates the invariants.
  SparseGeometry(int depth, std::vector<Coord> coords);

  /// Sorts and deduplicates arbitrary in-bounds coordinates.
  static SparseGeometry from_unsorted(int depth, std::vector<Coord> coords);

  /// Skips validation; callers guarantee canonical order and bounds.
  static SparseGeometry from_trusted(int depth, std::vector<Coord> coords)
  {
    SparseGeometry g;
    g.depth_ = depth;
    g.coords_ = std::move(coords);
    return g;
  }

  int depth() const noexcept { return depth_; }
  std::size_t size() const noexcept { return coords_.size(); }
  bool empty() const noexcept { return coords_.empty(); }
  const std::vector<Coord>& coords() const noexcept { return coords_; }
  std::span<const Coord> span() const noexcept { return coords_; }

  friend bool operator==(const SparseGeometry&, const SparseGeometry&) = default;

private:
  int depth_ = 0;
  std::vector<Coord> coords_;
};

using Point3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Point3> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

struct QuantizationTransform {
  Point3 origin{0.0, 0.0, 0.0};
  double step = 1.0;
  int depth = 0;

  friend bool operator==(const QuantizationTransform&, const QuantizationTransform&) = default;
};

struct Quantized {
  SparseGeometry geometry;
  QuantizationTransform transform;
};

/// Maps metric points onto a depth-`depth` lattice spanning the cloud's
/// bounding box; the largest axis extent covers the full 2^depth - 1 range.
Quantized quantize(const PointCloud& pc, int depth);

/// Voxel k maps back to origin + step * k (corner convention).
PointCloud dequantize(const SparseGeometry& g, const QuantizationTransform& t);

}  // namespace reno
