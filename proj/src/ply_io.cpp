// SPDX-License-Identifier: Apache-2.0

#include "reno/ply_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>
#include <string_view>
#include <vector>

#include "reno/error.hpp"
#include "reno/nn/param_io.hpp"

namespace reno {

namespace {

enum class ScalarType { I8, U8, I16, U16, I32, U32, F32, F64 };

struct Property {
  std::string name;
  ScalarType type;
  std::size_t offset = 0;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
  bool has_list = false;
  std::size_t stride = 0;
};

std::size_t size_of(ScalarType t)
{
  switch (t) {
  case ScalarType::I8:
  case ScalarType::U8: return 1;
  case ScalarType::I16:
  case ScalarType::U16: return 2;
  case ScalarType::I32:
  case ScalarType::U32:
  case ScalarType::F32: return 4;
  case ScalarType::F64: return 8;
  }
  return 0;
}

bool parse_type(std::string_view s, ScalarType& out)
{
  static const std::pair<std::string_view, ScalarType> table[] = {
    {"char", ScalarType::I8},    {"int8", ScalarType::I8},     {"uchar", ScalarType::U8},
    {"uint8", ScalarType::U8},   {"short", ScalarType::I16},   {"int16", ScalarType::I16},
    {"ushort", ScalarType::U16}, {"uint16", ScalarType::U16},  {"int", ScalarType::I32},
    {"int32", ScalarType::I32},  {"uint", ScalarType::U32},    {"uint32", ScalarType::U32},
    {"float", ScalarType::F32},  {"float32", ScalarType::F32}, {"double", ScalarType::F64},
    {"float64", ScalarType::F64},
  };
  for (const auto& [name, type] : table)
    if (name == s) {
      out = type;
      return true;
    }
  return false;
}

std::vector<std::string_view> split_ws(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    if (i > start)
      out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_double(std::string_view s, double& out)
{
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

[[noreturn]] void fail_line(std::size_t line, const std::string& msg)
{
  throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + msg);
}

double read_scalar(const std::uint8_t* p, ScalarType t)
{
  auto load = [p](auto v) {
    std::memcpy(&v, p, sizeof(v));
    return v;
  };
  switch (t) {
  case ScalarType::I8: return load(std::int8_t{});
  case ScalarType::U8: return load(std::uint8_t{});
  case ScalarType::I16: return load(std::int16_t{});
  case ScalarType::U16: return load(std::uint16_t{});
  case ScalarType::I32: return load(std::int32_t{});
  case ScalarType::U32: return load(std::uint32_t{});
  case ScalarType::F32: return load(float{});
  case ScalarType::F64: return load(double{});
  }
  return 0.0;
}

}  // namespace

PointCloud parse_ply(std::span<const std::uint8_t> bytes)
{
  static_assert(std::endian::native == std::endian::little, "binary PLY reader assumes LE host");
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());

  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size())
      return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line) || line != "ply")
    fail_line(1, "missing 'ply' magic");

  std::string format;
  std::vector<Element> elements;
  bool header_done = false;
  while (next_line(line)) {
    const auto tok = split_ws(line);
    if (tok.empty())
      continue;
    if (tok[0] == "end_header") {
      header_done = true;
      break;
    }
    if (tok[0] == "comment" || tok[0] == "obj_info")
      continue;
    if (tok[0] == "format") {
      if (tok.size() != 3)
        fail_line(line_no, "malformed format line");
      format = std::string(tok[1]);
    } else if (tok[0] == "element") {
      std::size_t count = 0;
      if (tok.size() != 3 ||
          std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), count).ec != std::errc())
        fail_line(line_no, "malformed element line");
      elements.push_back({std::string(tok[1]), count, {}, false, 0});
    } else if (tok[0] == "property") {
      if (elements.empty())
        fail_line(line_no, "property before any element");
      Element& el = elements.back();
      if (tok.size() >= 2 && tok[1] == "list") {
        if (tok.size() != 5)
          fail_line(line_no, "malformed list property");
        el.has_list = true;
        continue;
      }
      ScalarType type{};
      if (tok.size() != 3 || !parse_type(tok[1], type))
        fail_line(line_no, "malformed property line");
      el.props.push_back({std::string(tok[2]), type, el.stride});
      el.stride += size_of(type);
    } else {
      fail_line(line_no, "unknown header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!header_done)
    fail_line(line_no, "header ended without end_header");
  if (format == "binary_big_endian")
    throw Error(ErrorKind::Unsupported, "big-endian PLY is not supported");
  const bool ascii = format == "ascii";
  if (!ascii && format != "binary_little_endian")
    throw Error(ErrorKind::ParseError, "unknown PLY format '" + format + "'");

  std::size_t vertex_index = elements.size();
  for (std::size_t i = 0; i < elements.size(); ++i)
    if (elements[i].name == "vertex") {
      vertex_index = i;
      break;
    }
  if (vertex_index == elements.size())
    throw Error(ErrorKind::ParseError, "PLY has no vertex element");
  const Element& vertex = elements[vertex_index];
  if (vertex.has_list)
    throw Error(ErrorKind::Unsupported, "list properties on vertices are not supported");

  int axis_prop[3] = {-1, -1, -1};
  for (std::size_t p = 0; p < vertex.props.size(); ++p) {
    for (int a = 0; a < 3; ++a)
      if (vertex.props[p].name == std::string(1, static_cast<char>('x' + a)))
        axis_prop[a] = static_cast<int>(p);
  }
  for (int a = 0; a < 3; ++a) {
    if (axis_prop[a] < 0)
      throw Error(ErrorKind::ParseError, "vertex lacks coordinate property");
    const ScalarType t = vertex.props[static_cast<std::size_t>(axis_prop[a])].type;
    if (t != ScalarType::F32 && t != ScalarType::F64)
      throw Error(ErrorKind::ParseError, "coordinates must be float or double");
  }

  PointCloud pc;
  if (ascii) {
    for (std::size_t e = 0; e < vertex_index; ++e)
      for (std::size_t i = 0; i < elements[e].count; ++i)
        if (!next_line(line))
          fail_line(line_no, "truncated element data");
    pc.points.reserve(vertex.count);
    std::vector<double> values(vertex.props.size());
    for (std::size_t i = 0; i < vertex.count; ++i) {
      do {
        if (!next_line(line))
          fail_line(line_no, "truncated vertex data: expected " + std::to_string(vertex.count) +
                               " vertices, got " + std::to_string(i));
      } while (split_ws(line).empty());
      const auto tok = split_ws(line);
      if (tok.size() < vertex.props.size())
        fail_line(line_no, "too few values for vertex");
      for (std::size_t p = 0; p < vertex.props.size(); ++p)
        if (!parse_double(tok[p], values[p]))
          fail_line(line_no, "invalid number '" + std::string(tok[p]) + "'");
      pc.points.push_back({values[static_cast<std::size_t>(axis_prop[0])],
                           values[static_cast<std::size_t>(axis_prop[1])],
                           values[static_cast<std::size_t>(axis_prop[2])]});
    }
    return pc;
  }

  std::size_t offset = pos;
  for (std::size_t e = 0; e < vertex_index; ++e) {
    if (elements[e].has_list)
      throw Error(ErrorKind::Unsupported, "list element before vertices in binary PLY");
    offset += elements[e].count * elements[e].stride;
  }
  if (vertex.stride == 0 || bytes.size() < offset ||
      (bytes.size() - offset) / vertex.stride < vertex.count)
    throw Error(ErrorKind::ParseError, "binary payload truncated at offset " +
                                         std::to_string(bytes.size()) + ", need " +
                                         std::to_string(offset + vertex.count * vertex.stride));
  pc.points.reserve(vertex.count);
  for (std::size_t i = 0; i < vertex.count; ++i) {
    const std::uint8_t* rec = bytes.data() + offset + i * vertex.stride;
    Point3 p{};
    for (int a = 0; a < 3; ++a) {
      const Property& prop = vertex.props[static_cast<std::size_t>(axis_prop[a])];
      p[static_cast<std::size_t>(a)] = read_scalar(rec + prop.offset, prop.type);
    }
    pc.points.push_back(p);
  }
  return pc;
}

PointCloud parse_xyz(std::string_view text)
{
  PointCloud pc;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#')
      continue;
    if (tok.size() < 3)
      fail_line(line_no, "expected at least three values");
    Point3 p{};
    for (std::size_t a = 0; a < 3; ++a)
      if (!parse_double(tok[a], p[a]))
        fail_line(line_no, "invalid number '" + std::string(tok[a]) + "'");
    pc.points.push_back(p);
  }
  return pc;
}

PointCloud read_points(const std::string& path)
{
  const std::vector<std::uint8_t> bytes = nn::read_file_bytes(path);
  if (bytes.size() >= 3 && std::memcmp(bytes.data(), "ply", 3) == 0)
    return parse_ply(bytes);
  return parse_xyz(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string serialize_points(const PointCloud& pc, PointFormat format)
{
  std::string out;
  auto put_number = [&out](double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
  };

  if (format == PointFormat::Xyz) {
    for (const Point3& p : pc.points) {
      put_number(p[0]);
      out += ' ';
      put_number(p[1]);
      out += ' ';
      put_number(p[2]);
      out += '\n';
    }
    return out;
  }

  const char* type = format == PointFormat::PlyBinaryDouble ? "double" : "float";
  out += "ply\n";
  out += format == PointFormat::PlyAscii ? "format ascii 1.0\n"
                                         : "format binary_little_endian 1.0\n";
  out += "element vertex " + std::to_string(pc.size()) + "\n";
  for (const char* axis : {"x", "y", "z"})
    out += std::string("property ") + type + " " + axis + "\n";
  out += "end_header\n";

  for (const Point3& p : pc.points) {
    if (format == PointFormat::PlyAscii) {
      put_number(p[0]);
      out += ' ';
      put_number(p[1]);
      out += ' ';
      put_number(p[2]);
      out += '\n';
    } else if (format == PointFormat::PlyBinaryDouble) {
      for (double v : p)
        out.append(reinterpret_cast<const char*>(&v), sizeof(v));
    } else {
      for (double v : p) {
        const float f = static_cast<float>(v);
        out.append(reinterpret_cast<const char*>(&f), sizeof(f));
      }
    }
  }
  return out;
}

void write_points(const PointCloud& pc, const std::string& path, PointFormat format)
{
  for (const Point3& p : pc.points)
    for (double v : p)
      if (!std::isfinite(v))
        throw Error(ErrorKind::InvalidInput, "cannot write non-finite coordinates");
  const std::string data = serialize_points(pc, format);
  nn::write_file_bytes(path, std::span<const std::uint8_t>(
                               reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

}  // namespace reno
