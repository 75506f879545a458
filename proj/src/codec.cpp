// SPDX-License-Identifier: Apache-2.0

#include "reno/codec.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <memory>

#include "json.hpp"

#include "reno/bytes.hpp"
#include "reno/entropy.hpp"
#include "reno/error.hpp"
#include "reno/occupancy.hpp"

namespace reno {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::shared_ptr<const nn::NeighborIndex> neighbors_of(const SparseGeometry& g, int kernel)
{
  return std::make_shared<nn::NeighborIndex>(g.span(), kernel);
}

template <std::size_t K>
double encode_rows(RangeEncoder& enc, const nn::Matrix<float>& probs, std::span<const int> symbols)
{
  std::array<std::uint32_t, K + 1> cum{};
  double bits = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    quantize_probs_into(std::span<const float>(probs.row(i), K), cum);
    const auto s = static_cast<std::size_t>(symbols[i]);
    enc.encode(cum[s], cum[s + 1] - cum[s]);
    bits -= std::log2(static_cast<double>(cum[s + 1] - cum[s]) / kCdfTotal);
  }
  return bits;
}

template <std::size_t K>
std::vector<int> decode_rows(RangeDecoder& dec, const nn::Matrix<float>& probs)
{
  std::array<std::uint32_t, K + 1> cum{};
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    quantize_probs_into(std::span<const float>(probs.row(i), K), cum);
    out[i] = dec.decode(cum);
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> BitstreamHeader::serialize() const
{
  ByteWriter w;
  w.raw("RENO");
  w.u8(version);
  w.u8(static_cast<std::uint8_t>(mode));
  w.u8(depth);
  w.u8(0);
  for (double v : origin)
    w.f64(v);
  w.f64(step);
  w.u64(model_id);
  w.u8(base_code);
  return std::move(w.bytes());
}

BitstreamHeader BitstreamHeader::parse(std::span<const std::uint8_t> bytes)
{
  ByteReader r(bytes);
  if (r.str(4) != "RENO")
    throw Error(ErrorKind::CorruptStream, "bitstream magic is not RENO");
  BitstreamHeader h;
  h.version = r.u8();
  if (h.version != kBitstreamVersion)
    throw Error(ErrorKind::Unsupported, "bitstream version " + std::to_string(h.version));
  const std::uint8_t flags = r.u8();
  if (flags == static_cast<std::uint8_t>(CodingMode::TwoStage))
    h.mode = CodingMode::TwoStage;
  else if (flags == static_cast<std::uint8_t>(CodingMode::OneStage))
    h.mode = CodingMode::OneStage;
  else
    throw Error(ErrorKind::CorruptStream, "invalid coding-mode flags " + std::to_string(flags));
  h.depth = r.u8();
  if (h.depth < 1 || h.depth > kMaxDepth)
    throw Error(ErrorKind::CorruptStream, "invalid depth " + std::to_string(h.depth));
  r.u8();  // reserved
  for (double& v : h.origin)
    v = r.f64();
  h.step = r.f64();
  h.model_id = r.u64();
  h.base_code = r.u8();
  if (h.base_code == 0)
    throw Error(ErrorKind::CorruptStream, "root occupancy code is zero");
  if (!(h.step > 0.0) || !std::isfinite(h.step) || !std::isfinite(h.origin[0]) ||
      !std::isfinite(h.origin[1]) || !std::isfinite(h.origin[2]))
    throw Error(ErrorKind::CorruptStream, "invalid quantization transform");
  return h;
}

std::string to_json(const EncodeSummary& s, int indent)
{
  nlohmann::json j;
  j["points"] = s.points;
  j["voxels"] = s.voxels;
  j["bytes"] = s.bytes;
  j["payload_bytes"] = s.payload_bytes;
  j["bpp"] = s.bpp;
  j["estimated_bits"] = s.estimated_bits;
  j["per_scale_bits"] = s.per_scale_bits;
  j["wall_ms"] = {{"pyramid", s.wall.pyramid_ms}, {"nn", s.wall.nn_ms}, {"ae", s.wall.ae_ms}};
  return j.dump(indent);
}

EncodeResult encode(const SparseGeometry& g, const QuantizationTransform& t,
                    const TopParams<float>& params, const EncodeOptions& options)
{
  if (g.empty())
    throw Error(ErrorKind::EmptyInput, "nothing to encode");
  if (g.depth() < 1)
    throw Error(ErrorKind::DepthTooSmall, "a depth-0 geometry has no codes to transmit");
  if (g.depth() != t.depth)
    throw Error(ErrorKind::DepthMismatch, "geometry and transform depths differ");

  EncodeSummary summary;
  summary.points = g.size();
  summary.voxels = g.size();

  auto t0 = Clock::now();
  const Pyramid pyr = build_pyramid(g);
  summary.wall.pyramid_ms = elapsed_ms(t0);

  const int kernel = params.config.kernel;
  const int depth = g.depth();
  RangeEncoder enc;
  std::shared_ptr<const nn::NeighborIndex> parent_nbr;
  std::vector<int> s1, s2, classes;

  for (int d = 1; d < depth; ++d) {
    const ScaleLayer& lower = pyr.layers[static_cast<std::size_t>(d - 1)];
    const ScaleLayer& target = pyr.layers[static_cast<std::size_t>(d)];

    t0 = Clock::now();
    if (!parent_nbr)
      parent_nbr = neighbors_of(lower.parents, kernel);
    auto child_nbr = neighbors_of(target.parents, kernel);
    const ScaleGraph graph = ScaleGraph::build(lower.parents.span(), lower.codes,
                                               target.parents.span(), kernel, parent_nbr,
                                               child_nbr);
    const nn::Matrix<float> feats = trunk(graph, params);
    nn::Matrix<float> p1, p2;
    if (options.mode == CodingMode::TwoStage) {
      split_codes(target.codes, s1, s2);
      p1 = predict_s1(feats, params);
      p2 = predict_s2(feats, s1, params);
    } else {
      classes.assign(target.codes.begin(), target.codes.end());
      for (int& c : classes)
        c -= 1;
      p1 = predict_one_stage(feats, params);
    }
    summary.wall.nn_ms += elapsed_ms(t0);

    t0 = Clock::now();
    double bits = 0.0;
    if (options.mode == CodingMode::TwoStage) {
      bits += encode_rows<kSubSymbols>(enc, p1, s1);
      bits += encode_rows<kSubSymbols>(enc, p2, s2);
    } else {
      bits += encode_rows<kOneStageSymbols>(enc, p1, classes);
    }
    summary.wall.ae_ms += elapsed_ms(t0);
    summary.per_scale_bits.push_back(bits);
    summary.estimated_bits += bits;
    parent_nbr = std::move(child_nbr);
  }

  t0 = Clock::now();
  std::vector<std::uint8_t> payload = enc.finish();
  summary.wall.ae_ms += elapsed_ms(t0);

  BitstreamHeader header;
  header.mode = options.mode;
  header.depth = static_cast<std::uint8_t>(depth);
  header.origin = t.origin;
  header.step = t.step;
  header.model_id = model_id(params);
  header.base_code = pyr.layers.front().codes.front();

  EncodeResult result;
  result.bytes = header.serialize();
  result.bytes.insert(result.bytes.end(), payload.begin(), payload.end());
  summary.payload_bytes = payload.size();
  summary.bytes = result.bytes.size();
  summary.bpp = 8.0 * static_cast<double>(summary.payload_bytes) /
                static_cast<double>(summary.points);
  result.summary = std::move(summary);
  return result;
}

DecodeResult decode(std::span<const std::uint8_t> bytes, const TopParams<float>& params,
                    const DecodeOptions& options)
{
  const BitstreamHeader header = BitstreamHeader::parse(bytes);
  DecodeResult result;
  result.model_id_matches = header.model_id == model_id(params);
  if (!result.model_id_matches && options.strict_model_id)
    throw Error(ErrorKind::ModelMismatch, "bitstream was produced with different parameters");

  const int kernel = params.config.kernel;
  const int depth = header.depth;
  RangeDecoder dec(bytes.subspan(kHeaderSize));

  ScaleLayer layer;
  layer.parents = SparseGeometry::from_trusted(0, {Coord{0, 0, 0}});
  layer.codes = {header.base_code};
  std::shared_ptr<const nn::NeighborIndex> parent_nbr;
  std::vector<int> s1, s2;

  for (int d = 1; d < depth; ++d) {
    auto t0 = Clock::now();
    SparseGeometry children = fcg(layer);
    result.wall.pyramid_ms += elapsed_ms(t0);
    if (children.size() > options.max_voxels)
      throw Error(ErrorKind::CorruptStream, "decoded geometry exceeds the voxel limit");

    t0 = Clock::now();
    if (!parent_nbr)
      parent_nbr = neighbors_of(layer.parents, kernel);
    auto child_nbr = neighbors_of(children, kernel);
    const ScaleGraph graph = ScaleGraph::build(layer.parents.span(), layer.codes,
                                               children.span(), kernel, parent_nbr, child_nbr);
    const nn::Matrix<float> feats = trunk(graph, params);
    std::vector<std::uint8_t> codes(children.size());

    if (header.mode == CodingMode::TwoStage) {
      const nn::Matrix<float> p1 = predict_s1(feats, params);
      result.wall.nn_ms += elapsed_ms(t0);

      t0 = Clock::now();
      s1 = decode_rows<kSubSymbols>(dec, p1);
      result.wall.ae_ms += elapsed_ms(t0);

      t0 = Clock::now();
      const nn::Matrix<float> p2 = predict_s2(feats, s1, params);
      result.wall.nn_ms += elapsed_ms(t0);

      t0 = Clock::now();
      s2 = decode_rows<kSubSymbols>(dec, p2);
      for (std::size_t i = 0; i < codes.size(); ++i) {
        const int code = s1[i] * 16 + s2[i];
        if (code == 0)
          throw Error(ErrorKind::CorruptStream, "decoded empty occupancy code");
        codes[i] = static_cast<std::uint8_t>(code);
      }
      result.wall.ae_ms += elapsed_ms(t0);
    } else {
      const nn::Matrix<float> p = predict_one_stage(feats, params);
      result.wall.nn_ms += elapsed_ms(t0);

      t0 = Clock::now();
      const std::vector<int> classes = decode_rows<kOneStageSymbols>(dec, p);
      for (std::size_t i = 0; i < codes.size(); ++i)
        codes[i] = static_cast<std::uint8_t>(classes[i] + 1);
      result.wall.ae_ms += elapsed_ms(t0);
    }

    layer.parents = std::move(children);
    layer.codes = std::move(codes);
    parent_nbr = std::move(child_nbr);
  }

  dec.finish();

  const auto t0 = Clock::now();
  result.geometry = fcg(layer);
  result.wall.pyramid_ms += elapsed_ms(t0);
  if (result.geometry.size() > options.max_voxels)
    throw Error(ErrorKind::CorruptStream, "decoded geometry exceeds the voxel limit");
  result.transform.origin = header.origin;
  result.transform.step = header.step;
  result.transform.depth = depth;
  return result;
}

EncodeResult encode_file(const PointCloud& pc, int depth, const TopParams<float>& params,
                         const EncodeOptions& options)
{
  const Quantized q = quantize(pc, depth);
  EncodeResult r = encode(q.geometry, q.transform, params, options);
  r.summary.points = pc.size();
  r.summary.bpp = 8.0 * static_cast<double>(r.summary.payload_bytes) /
                  static_cast<double>(pc.size());
  return r;
}

PointCloud decode_file(std::span<const std::uint8_t> bytes, const TopParams<float>& params,
                       const DecodeOptions& options)
{
  const DecodeResult r = decode(bytes, params, options);
  return dequantize(r.geometry, r.transform);
}

}  // namespace reno
