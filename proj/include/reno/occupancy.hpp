// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "reno/voxel.hpp"

namespace reno {

/// One scale of the multiscale representation: parent voxels at depth d-1
/// and, index-aligned, the 8-bit code marking which children are occupied.
struct ScaleLayer {
  SparseGeometry parents;
  std::vector<std::uint8_t> codes;

  friend bool operator==(const ScaleLayer&, const ScaleLayer&) = default;
};

/// Layers ordered shallowest first; layers[i].parents has depth i.
struct Pyramid {
  int depth = 0;
  std::vector<ScaleLayer> layers;
};

/// Octant index of `child` inside `parent`: dx + 2*dy + 4*dz.
int octant_of(const Coord& child, const Coord& parent);

/// Child coordinate for octant `delta` of `parent`.
constexpr Coord child_at(const Coord& parent, int delta)
{
  return {2 * parent.x + static_cast<std::uint32_t>(delta & 1),
          2 * parent.y + static_cast<std::uint32_t>((delta >> 1) & 1),
          2 * parent.z + static_cast<std::uint32_t>((delta >> 2) & 1)};
}

/// Downscales by one level, producing parents and their occupancy codes.
ScaleLayer fog(const SparseGeometry& g);

/// Expands each code into its occupied children.
SparseGeometry fcg(const ScaleLayer& layer);

Pyramid build_pyramid(const SparseGeometry& g);

SparseGeometry reconstruct_pyramid(const Pyramid& p);

}  // namespace reno
