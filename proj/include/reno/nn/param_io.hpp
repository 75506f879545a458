// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace reno::nn {

/// A tensor as stored in a parameter file: 32-bit floats, row-major.
struct StoredTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

/// Layout: "RNNW", u8 version, u32 tensor count, then per tensor u16 name
/// length + UTF-8 name, u8 rank, u32 dims, f32 values. Little-endian.
std::vector<std::uint8_t> serialize_params(std::span<const StoredTensor> tensors);

/// Validates magic, version and that the declared sizes exactly cover the
/// buffer; throws reno::Error(ParseError) otherwise.
std::vector<StoredTensor> deserialize_params(std::span<const std::uint8_t> bytes);

inline constexpr std::uint8_t kParamFileVersion = 1;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

/// Writes via a temporary file and rename, so a failure leaves nothing behind.
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace reno::nn
