// SPDX-License-Identifier: Apache-2.0

#include "reno/nn/param_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "reno/bytes.hpp"
#include "reno/error.hpp"

namespace reno::nn {

std::vector<std::uint8_t> serialize_params(std::span<const StoredTensor> tensors)
{
  ByteWriter w;
  w.raw("RNNW");
  w.u8(kParamFileVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const StoredTensor& t : tensors) {
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name);
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape)
      w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values)
      w.f32(v);
  }
  return std::move(w.bytes());
}

std::vector<StoredTensor> deserialize_params(std::span<const std::uint8_t> bytes)
{
  ByteReader r(bytes, ErrorKind::ParseError);
  if (r.str(4) != "RNNW")
    throw Error(ErrorKind::ParseError, "parameter file magic is not RNNW");
  const std::uint8_t version = r.u8();
  if (version != kParamFileVersion)
    throw Error(ErrorKind::Unsupported, "parameter file version " + std::to_string(version));
  const std::uint32_t count = r.u32();

  std::vector<StoredTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.str(r.u16());
    const std::uint8_t rank = r.u8();
    std::size_t numel = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.u32());
      numel *= t.shape.back();
    }
    if (numel > r.remaining() / 4)
      throw Error(ErrorKind::ParseError, "tensor " + t.name + " exceeds the file size");
    t.values.resize(numel);
    for (float& v : t.values)
      v = r.f32();
    out.push_back(std::move(t));
  }
  if (r.remaining() != 0)
    throw Error(ErrorKind::ParseError, std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes)
{
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(ErrorKind::Io, "cannot create " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::remove(tmp.c_str());
      throw Error(ErrorKind::Io, "write failed for " + path);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw Error(ErrorKind::Io, "cannot rename into " + path + ": " + ec.message());
  }
}

}  // namespace reno::nn
