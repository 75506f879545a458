// SPDX-License-Identifier: Apache-2.0

#include "reno/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "reno/error.hpp"

namespace reno {

std::string_view to_string(ErrorKind kind)
{
  switch (kind) {
  case ErrorKind::EmptyInput: return "EmptyInput";
  case ErrorKind::InvalidInput: return "InvalidInput";
  case ErrorKind::DepthMismatch: return "DepthMismatch";
  case ErrorKind::DepthUnderflow: return "DepthUnderflow";
  case ErrorKind::DepthTooSmall: return "DepthTooSmall";
  case ErrorKind::NotAChild: return "NotAChild";
  case ErrorKind::InvalidCode: return "InvalidCode";
  case ErrorKind::CorruptPyramid: return "CorruptPyramid";
  case ErrorKind::IndexError: return "IndexError";
  case ErrorKind::MissingParent: return "MissingParent";
  case ErrorKind::InvalidProbability: return "InvalidProbability";
  case ErrorKind::UnexpectedEof: return "UnexpectedEof";
  case ErrorKind::CorruptStream: return "CorruptStream";
  case ErrorKind::ModelMismatch: return "ModelMismatch";
  case ErrorKind::ParseError: return "ParseError";
  case ErrorKind::Unsupported: return "Unsupported";
  case ErrorKind::Io: return "Io";
  case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
  }
  return "Unknown";
}

namespace {

void check_depth(int depth)
{
  if (depth < 0 || depth > kMaxDepth)
    throw Error(ErrorKind::InvalidInput, "depth " + std::to_string(depth) + " outside [0, 21]");
}

bool in_bounds(const Coord& c, int depth)
{
  const std::uint64_t limit = std::uint64_t{1} << depth;
  return c.x < limit && c.y < limit && c.z < limit;
}

}  // namespace

SparseGeometry::SparseGeometry(int depth, std::vector<Coord> coords)
  : depth_(depth), coords_(std::move(coords))
{
  check_depth(depth);
  MortonKey prev = 0;
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    if (!in_bounds(coords_[i], depth))
      throw Error(ErrorKind::InvalidInput, "coordinate outside the depth-" +
                                             std::to_string(depth) + " lattice");
    const MortonKey key = morton_encode(coords_[i]);
    if (i > 0 && key <= prev)
      throw Error(ErrorKind::InvalidInput, "coordinates not strictly increasing");
    prev = key;
  }
}

SparseGeometry SparseGeometry::from_unsorted(int depth, std::vector<Coord> coords)
{
  check_depth(depth);
  std::vector<MortonKey> keys;
  keys.reserve(coords.size());
  for (const Coord& c : coords) {
    if (!in_bounds(c, depth))
      throw Error(ErrorKind::InvalidInput, "coordinate outside the lattice");
    keys.push_back(morton_encode(c));
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  coords.clear();
  coords.reserve(keys.size());
  for (MortonKey k : keys)
    coords.push_back(morton_decode(k));
  return from_trusted(depth, std::move(coords));
}

Quantized quantize(const PointCloud& pc, int depth)
{
  if (pc.empty())
    throw Error(ErrorKind::EmptyInput, "point cloud has no points");
  if (depth < 1 || depth > kMaxDepth)
    throw Error(ErrorKind::InvalidInput, "quantization depth must be in [1, 21]");

  Point3 lo = pc.points.front();
  Point3 hi = lo;
  for (const Point3& p : pc.points) {
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(p[a]))
        throw Error(ErrorKind::InvalidInput, "non-finite coordinate");
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }

  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  const double max_index = static_cast<double>((std::uint64_t{1} << depth) - 1);
  QuantizationTransform t;
  t.origin = lo;
  t.depth = depth;
  t.step = extent > 0.0 ? extent / max_index : 1.0;

  std::vector<Coord> coords;
  coords.reserve(pc.size());
  for (const Point3& p : pc.points) {
    std::array<std::uint32_t, 3> idx{};
    for (int a = 0; a < 3; ++a) {
      const double u = std::floor((p[a] - t.origin[a]) / t.step + 0.5);
      idx[a] = static_cast<std::uint32_t>(std::clamp(u, 0.0, max_index));
    }
    coords.push_back({idx[0], idx[1], idx[2]});
  }
  return {SparseGeometry::from_unsorted(depth, std::move(coords)), t};
}

PointCloud dequantize(const SparseGeometry& g, const QuantizationTransform& t)
{
  if (g.depth() != t.depth)
    throw Error(ErrorKind::DepthMismatch, "geometry depth " + std::to_string(g.depth()) +
                                            " vs transform depth " + std::to_string(t.depth));
  PointCloud out;
  out.points.reserve(g.size());
  for (const Coord& c : g.coords()) {
    out.points.push_back({t.origin[0] + t.step * c.x, t.origin[1] + t.step * c.y,
                          t.origin[2] + t.step * c.z});
  }
  return out;
}

}  // namespace reno
