// SPDX-License-Identifier: Apache-2.0

#include "reno/top_model.hpp"

#include <cmath>
#include <map>

namespace reno {

std::vector<std::uint8_t> save_params(const TopParams<float>& params)
{
  std::vector<nn::StoredTensor> stored;
  for (const auto* t : params.tensors())
    stored.push_back({t->name, t->shape, t->values});
  return nn::serialize_params(stored);
}

TopParams<float> load_params(std::span<const std::uint8_t> bytes)
{
  std::map<std::string, nn::StoredTensor> by_name;
  for (auto& t : nn::deserialize_params(bytes))
    by_name.emplace(t.name, std::move(t));

  auto shape_of = [&](const std::string& name) -> const std::vector<std::size_t>& {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw Error(ErrorKind::ParseError, "parameter file lacks tensor " + name);
    return it->second.shape;
  };

  const auto& emb = shape_of("code_embedding");
  const auto& conv = shape_of("extract.conv1.weight");
  if (emb.size() != 2 || conv.size() != 3)
    throw Error(ErrorKind::ParseError, "unexpected tensor rank in parameter file");
  ModelConfig config;
  config.channels = static_cast<int>(emb[1]);
  config.kernel = static_cast<int>(std::lround(std::cbrt(static_cast<double>(conv[0]))));
  if (config.channels < 1 || config.kernel < 1 || config.kernel % 2 == 0 ||
      static_cast<std::size_t>(config.kernel * config.kernel * config.kernel) != conv[0])
    throw Error(ErrorKind::ParseError, "parameter file has an invalid architecture");

  TopParams<float> p = TopParams<float>::zeros(config);
  for (nn::ParamTensor<float>* t : p.tensors()) {
    auto it = by_name.find(t->name);
    if (it == by_name.end())
      throw Error(ErrorKind::ParseError, "parameter file lacks tensor " + t->name);
    if (it->second.shape != t->shape)
      throw Error(ErrorKind::ParseError, "tensor " + t->name + " has the wrong shape");
    t->values = std::move(it->second.values);
    for (float v : t->values)
      if (!std::isfinite(v))
        throw Error(ErrorKind::ParseError, "tensor " + t->name + " holds non-finite values");
  }
  if (by_name.size() != p.tensors().size())
    throw Error(ErrorKind::ParseError, "parameter file has unknown tensors");
  return p;
}

std::uint64_t model_id(const TopParams<float>& params)
{
  return nn::fnv1a64(save_params(params));
}

ScaleGraph ScaleGraph::build(std::span<const Coord> parents, std::span<const std::uint8_t> codes,
                             std::span<const Coord> children, int kernel,
                             std::shared_ptr<const nn::NeighborIndex> parent_neighbors,
                             std::shared_ptr<const nn::NeighborIndex> child_neighbors)
{
  if (codes.size() != parents.size())
    throw Error(ErrorKind::InvalidInput, "code count does not match parent count");
  ScaleGraph g;
  g.parents.assign(parents.begin(), parents.end());
  g.children.assign(children.begin(), children.end());
  g.parent_codes.assign(codes.begin(), codes.end());

  const nn::CoordHashMap lookup(parents);
  g.child_parent.resize(children.size());
  g.child_octant.resize(children.size());
  for (std::size_t i = 0; i < children.size(); ++i) {
    const Coord& c = children[i];
    const std::int32_t j = lookup.find(morton_encode({c.x >> 1, c.y >> 1, c.z >> 1}));
    if (j < 0)
      throw Error(ErrorKind::MissingParent, "child " + std::to_string(i) + " has no parent");
    g.child_parent[i] = j;
    g.child_octant[i] = static_cast<int>((c.x & 1) | ((c.y & 1) << 1) | ((c.z & 1) << 2));
  }

  g.parent_neighbors = parent_neighbors && parent_neighbors->kernel_size() == kernel
                         ? std::move(parent_neighbors)
                         : std::make_shared<nn::NeighborIndex>(parents, kernel);
  g.child_neighbors = child_neighbors && child_neighbors->kernel_size() == kernel
                        ? std::move(child_neighbors)
                        : std::make_shared<nn::NeighborIndex>(children, kernel);
  return g;
}

void split_codes(std::span<const std::uint8_t> codes, std::vector<int>& s1, std::vector<int>& s2)
{
  s1.resize(codes.size());
  s2.resize(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    s1[i] = codes[i] >> 4;
    s2[i] = codes[i] & 0x0f;
  }
}

ScalePredictionF predict(const ScaleLayer& layer, const SparseGeometry& children,
                         std::optional<std::span<const int>> true_s1,
                         const TopParams<float>& params)
{
  const ScaleGraph g = ScaleGraph::build(layer.parents.span(), layer.codes, children.span(),
                                         params.config.kernel);
  const nn::Matrix<float> feats = trunk(g, params);
  ScalePredictionF out;
  out.p_s1 = predict_s1(feats, params);
  if (true_s1) {
    if (true_s1->size() != children.size())
      throw Error(ErrorKind::InvalidInput, "S1 symbol count does not match children");
    out.p_s2 = predict_s2(feats, *true_s1, params);
  }
  return out;
}

}  // namespace reno
