// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reno/top_model.hpp"
#include "reno/voxel.hpp"

namespace reno {

enum class CodingMode : std::uint8_t {
  TwoStage = 1,  // flags bit0: S1 block then S2 block per scale
  OneStage = 2,  // flags bit1: one 255-ary symbol per code
};

inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::size_t kHeaderSize = 49;

/// Fixed 49-byte container header; all multi-byte fields little-endian.
struct BitstreamHeader {
  std::uint8_t version = kBitstreamVersion;
  CodingMode mode = CodingMode::TwoStage;
  std::uint8_t depth = 0;
  Point3 origin{0.0, 0.0, 0.0};
  double step = 1.0;
  std::uint64_t model_id = 0;
  std::uint8_t base_code = 0;  // occupancy code of the depth-0 root

  std::vector<std::uint8_t> serialize() const;
  static BitstreamHeader parse(std::span<const std::uint8_t> bytes);
};

struct StageTimes {
  double pyramid_ms = 0.0;
  double nn_ms = 0.0;
  double ae_ms = 0.0;

  double total_ms() const { return pyramid_ms + nn_ms + ae_ms; }
};

struct EncodeSummary {
  std::size_t points = 0;  // input points; voxel count when encoding a geometry
  std::size_t voxels = 0;
  std::size_t bytes = 0;  // header + payload
  std::size_t payload_bytes = 0;
  double bpp = 0.0;  // 8 * payload_bytes / points
  double estimated_bits = 0.0;  // sum of -log2 of the quantized coding probabilities
  std::vector<double> per_scale_bits;  // entry d-1 covers scale d
  StageTimes wall;
};

std::string to_json(const EncodeSummary& s, int indent = 2);

struct EncodeResult {
  std::vector<std::uint8_t> bytes;
  EncodeSummary summary;
};

struct EncodeOptions {
  CodingMode mode = CodingMode::TwoStage;
};

struct DecodeOptions {
  bool strict_model_id = false;
  std::size_t max_voxels = std::size_t{1} << 26;
};

struct DecodeResult {
  SparseGeometry geometry;
  QuantizationTransform transform;
  bool model_id_matches = true;
  StageTimes wall;  // pyramid_ms holds the coordinate expansion time
};

EncodeResult encode(const SparseGeometry& g, const QuantizationTransform& t,
                    const TopParams<float>& params, const EncodeOptions& options = {});

DecodeResult decode(std::span<const std::uint8_t> bytes, const TopParams<float>& params,
                    const DecodeOptions& options = {});

EncodeResult encode_file(const PointCloud& pc, int depth, const TopParams<float>& params,
                         const EncodeOptions& options = {});

PointCloud decode_file(std::span<const std::uint8_t> bytes, const TopParams<float>& params,
                       const DecodeOptions& options = {});

}  // namespace reno
