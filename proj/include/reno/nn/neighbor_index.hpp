// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reno/voxel.hpp"

namespace reno::nn {

/// Open-addressing map from Morton key to row index.
class CoordHashMap {
public:
  explicit CoordHashMap(std::span<const Coord> coords);

  /// Row of `key`, or -1.
  std::int32_t find(MortonKey key) const noexcept;

private:
  std::vector<MortonKey> keys_;  // stored as key + 1; 0 marks an empty slot
  std::vector<std::int32_t> rows_;
  std::uint64_t mask_ = 0;
};

/// For every row, the rows found at each of the k^3 kernel offsets, with
/// -1 for unoccupied neighbors. Offsets run lexicographically over
/// (dz, dy, dx) in [-r, r]; offset o and k^3 - 1 - o are mirror images.
class NeighborIndex {
public:
  NeighborIndex() = default;
  NeighborIndex(std::span<const Coord> coords, int kernel_size);

  int kernel_size() const noexcept { return kernel_size_; }
  int volume() const noexcept { return volume_; }
  std::size_t rows() const noexcept { return rows_; }

  const std::int32_t* row(std::size_t i) const noexcept
  {
    return table_.data() + i * static_cast<std::size_t>(volume_);
  }

private:
  int kernel_size_ = 0;
  int volume_ = 0;
  std::size_t rows_ = 0;
  std::vector<std::int32_t> table_;
};

}  // namespace reno::nn
