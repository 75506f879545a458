// SPDX-License-Identifier: Apache-2.0

#include "reno/nn/neighbor_index.hpp"

#include <bit>

#include "reno/error.hpp"
#include "reno/parallel.hpp"

namespace reno::nn {

namespace {

std::uint64_t mix(std::uint64_t k)
{
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  return k;
}

}  // namespace

CoordHashMap::CoordHashMap(std::span<const Coord> coords)
{
  const std::size_t capacity = std::bit_ceil(std::max<std::size_t>(16, coords.size() * 2));
  keys_.assign(capacity, 0);
  rows_.assign(capacity, -1);
  mask_ = capacity - 1;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const MortonKey stored = morton_encode(coords[i]) + 1;
    std::uint64_t slot = mix(stored) & mask_;
    while (keys_[slot] != 0 && keys_[slot] != stored)
      slot = (slot + 1) & mask_;
    keys_[slot] = stored;
    rows_[slot] = static_cast<std::int32_t>(i);
  }
}

std::int32_t CoordHashMap::find(MortonKey key) const noexcept
{
  const MortonKey stored = key + 1;
  std::uint64_t slot = mix(stored) & mask_;
  while (keys_[slot] != 0) {
    if (keys_[slot] == stored)
      return rows_[slot];
    slot = (slot + 1) & mask_;
  }
  return -1;
}

NeighborIndex::NeighborIndex(std::span<const Coord> coords, int kernel_size)
  : kernel_size_(kernel_size), rows_(coords.size())
{
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw Error(ErrorKind::InvalidInput, "kernel size must be odd and positive");
  volume_ = kernel_size * kernel_size * kernel_size;
  table_.assign(rows_ * static_cast<std::size_t>(volume_), -1);

  const CoordHashMap map(coords);
  const int r = kernel_size / 2;
  const std::int64_t limit = std::int64_t{1} << kMaxDepth;

  parallel_for(rows_, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Coord c = coords[i];
      std::int32_t* out = table_.data() + i * static_cast<std::size_t>(volume_);
      int o = 0;
      for (int dz = -r; dz <= r; ++dz) {
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx, ++o) {
            if (dx == 0 && dy == 0 && dz == 0) {
              out[o] = static_cast<std::int32_t>(i);
              continue;
            }
            const std::int64_t x = std::int64_t{c.x} + dx;
            const std::int64_t y = std::int64_t{c.y} + dy;
            const std::int64_t z = std::int64_t{c.z} + dz;
            if (x < 0 || y < 0 || z < 0 || x >= limit || y >= limit || z >= limit)
              continue;
            out[o] = map.find(morton_encode({static_cast<std::uint32_t>(x),
                                             static_cast<std::uint32_t>(y),
                                             static_cast<std::uint32_t>(z)}));
          }
        }
      }
    }
  });
}

}  // namespace reno::nn
