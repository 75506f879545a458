// SPDX-License-Identifier: Apache-2.0

#include "reno/occupancy.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "reno/error.hpp"

namespace reno {

int octant_of(const Coord& child, const Coord& parent)
{
  if (child.x / 2 != parent.x || child.y / 2 != parent.y || child.z / 2 != parent.z)
    throw Error(ErrorKind::NotAChild, "child is not inside the parent's octet");
  return static_cast<int>((child.x - 2 * parent.x) + 2 * (child.y - 2 * parent.y) +
                          4 * (child.z - 2 * parent.z));
}

// With z-major Morton keys, parent key == child key >> 3 and the octant is
// the low three bits, so the stride-2 convolution with weights 2^octant
// reduces to OR-accumulation over runs of equal parent keys.
ScaleLayer fog(const SparseGeometry& g)
{
  if (g.depth() < 1)
    throw Error(ErrorKind::DepthUnderflow, "cannot downscale a depth-0 geometry");

  ScaleLayer layer;
  std::vector<Coord> parents;
  parents.reserve(g.size() / 2 + 1);
  layer.codes.reserve(g.size() / 2 + 1);

  MortonKey current = ~MortonKey{0};
  for (const Coord& c : g.coords()) {
    const MortonKey key = morton_encode(c);
    const MortonKey parent = key >> 3;
    if (parent != current) {
      current = parent;
      parents.push_back({c.x >> 1, c.y >> 1, c.z >> 1});
      layer.codes.push_back(0);
    }
    layer.codes.back() |= static_cast<std::uint8_t>(1u << (key & 7));
  }
  layer.parents = SparseGeometry::from_trusted(g.depth() - 1, std::move(parents));
  return layer;
}

// Emitting children parent by parent in ascending octant is already the
// canonical order of the child keys, so no re-sort is needed.
SparseGeometry fcg(const ScaleLayer& layer)
{
  if (layer.codes.size() != layer.parents.size())
    throw Error(ErrorKind::InvalidInput, "code count does not match parent count");
  if (layer.parents.depth() >= kMaxDepth)
    throw Error(ErrorKind::InvalidInput, "cannot upscale beyond the maximum depth");

  std::size_t total = 0;
  for (std::uint8_t code : layer.codes)
    total += static_cast<std::size_t>(std::popcount(code));

  std::vector<Coord> children;
  children.reserve(total);
  const auto& parents = layer.parents.coords();
  for (std::size_t i = 0; i < parents.size(); ++i) {
    const unsigned code = layer.codes[i];
    if (code == 0)
      throw Error(ErrorKind::InvalidCode, "occupancy code 0 at parent " + std::to_string(i));
    for (int delta = 0; delta < 8; ++delta) {
      if (code & (1u << delta))
        children.push_back(child_at(parents[i], delta));
    }
  }
  return SparseGeometry::from_trusted(layer.parents.depth() + 1, std::move(children));
}

Pyramid build_pyramid(const SparseGeometry& g)
{
  if (g.empty())
    throw Error(ErrorKind::EmptyInput, "cannot build a pyramid of an empty geometry");
  if (g.depth() < 1)
    throw Error(ErrorKind::DepthUnderflow, "pyramid needs depth >= 1");

  Pyramid p;
  p.depth = g.depth();
  p.layers.resize(static_cast<std::size_t>(g.depth()));
  ScaleLayer layer = fog(g);
  for (int d = g.depth() - 1; d >= 0; --d) {
    ScaleLayer next;
    if (d > 0)
      next = fog(layer.parents);
    p.layers[static_cast<std::size_t>(d)] = std::move(layer);
    layer = std::move(next);
  }
  return p;
}

SparseGeometry reconstruct_pyramid(const Pyramid& p)
{
  if (p.layers.empty())
    throw Error(ErrorKind::CorruptPyramid, "pyramid has no layers");
  SparseGeometry g;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const ScaleLayer& layer = p.layers[i];
    if (layer.parents.depth() != static_cast<int>(i))
      throw Error(ErrorKind::CorruptPyramid, "layer " + std::to_string(i) + " has wrong depth");
    if (i > 0 && !(g == layer.parents)) {
      throw Error(ErrorKind::CorruptPyramid,
                  "layer " + std::to_string(i) + " parents disagree with expanded codes");
    }
    try {
      g = fcg(layer);
    } catch (const Error& e) {
      throw Error(ErrorKind::CorruptPyramid, e.what());
    }
  }
  return g;
}

}  // namespace reno
