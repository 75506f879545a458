// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "reno/voxel.hpp"

namespace reno {

enum class PointFormat {
  PlyBinaryFloat,   // binary_little_endian, float x/y/z
  PlyBinaryDouble,  // binary_little_endian, double x/y/z
  PlyAscii,
  Xyz,  // whitespace-separated "x y z" lines
};

/// PLY (ascii or binary little-endian) or plain xyz text, chosen by content:
/// files starting with "ply" are PLY. Only vertex x/y/z are kept.
PointCloud read_points(const std::string& path);

PointCloud parse_ply(std::span<const std::uint8_t> bytes);
PointCloud parse_xyz(std::string_view text);

void write_points(const PointCloud& pc, const std::string& path,
                  PointFormat format = PointFormat::PlyBinaryFloat);

std::string serialize_points(const PointCloud& pc, PointFormat format);

}  // namespace reno
