// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "reno/nn/layers.hpp"
#include "reno/nn/neighbor_index.hpp"
#include "reno/nn/param_io.hpp"
#include "reno/nn/tensor.hpp"
#include "reno/occupancy.hpp"

namespace reno {

inline constexpr int kSubSymbols = 16;        // 4-bit sub-codes
inline constexpr int kOneStageSymbols = 255;  // codes 1..255 as classes 0..254

struct ModelConfig {
  int channels = 32;
  int kernel = 3;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct ResBlockParams {
  nn::ParamTensor<T> conv1_w, conv1_b, conv2_w, conv2_b;
};

template <typename T>
struct MlpParams {
  nn::ParamTensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

/// Every learnable tensor of the occupancy predictor. Weights are shared by
/// all scales.
template <typename T>
struct TopParams {
  ModelConfig config;
  nn::ParamTensor<T> code_embedding;    // 256 x C, row 0 unused
  nn::ParamTensor<T> octant_embedding;  // 8 x C
  nn::ParamTensor<T> s1_embedding;      // 16 x C
  ResBlockParams<T> extract;
  ResBlockParams<T> target;
  MlpParams<T> head_s1;   // C -> C -> 16
  MlpParams<T> head_s2;   // C -> C -> 16
  MlpParams<T> head_one;  // C -> C -> 255, single-stage baseline

  static TopParams zeros(ModelConfig config);

  /// Uniform(+-sqrt(1/fan_in)) for conv and linear layers, N(0, 0.02) for
  /// embeddings.
  static TopParams initialized(ModelConfig config, std::uint64_t seed);

  std::vector<nn::ParamTensor<T>*> tensors();
  std::vector<const nn::ParamTensor<T>*> tensors() const;

  std::size_t parameter_count() const;

  template <typename U>
  TopParams<U> cast() const;
};

/// Serialized form of a float model and its 64-bit identifier.
std::vector<std::uint8_t> save_params(const TopParams<float>& params);
TopParams<float> load_params(std::span<const std::uint8_t> bytes);
std::uint64_t model_id(const TopParams<float>& params);

/// Geometry-only inputs of one scale transition: parents at depth d-1 with
/// their codes, and the target children at depth d.
struct ScaleGraph {
  std::vector<Coord> parents;
  std::vector<int> parent_codes;
  std::vector<Coord> children;
  std::vector<std::int32_t> child_parent;  // parent row of each child
  std::vector<int> child_octant;
  std::shared_ptr<const nn::NeighborIndex> parent_neighbors;
  std::shared_ptr<const nn::NeighborIndex> child_neighbors;

  /// Pass prebuilt neighbor indices to reuse them across scales; missing
  /// ones are built here. Throws MissingParent for orphan children.
  static ScaleGraph build(std::span<const Coord> parents, std::span<const std::uint8_t> codes,
                          std::span<const Coord> children, int kernel,
                          std::shared_ptr<const nn::NeighborIndex> parent_neighbors = nullptr,
                          std::shared_ptr<const nn::NeighborIndex> child_neighbors = nullptr);
};

/// Activations kept for the reverse pass.
template <typename T>
struct TrunkCache {
  nn::Matrix<T> emb, a1, parent_feats;
  nn::Matrix<T> replicated, b1, feats;
};

template <typename T>
struct HeadCache {
  nn::Matrix<T> input, hidden, probs;
};

struct ScalePredictionF {
  nn::Matrix<float> p_s1;
  nn::Matrix<float> p_s2;
};

// ---------------------------------------------------------------------------
// Forward pieces

/// Emb(codes) followed by a residual block on the parent geometry.
template <typename T>
nn::Matrix<T> extract_features(std::span<const int> codes, const nn::NeighborIndex& neighbors,
                               const TopParams<T>& p, TrunkCache<T>* cache = nullptr)
{
  nn::Matrix<T> emb = nn::embed(p.code_embedding, codes);
  nn::Matrix<T> h1 = nn::sparse_conv(emb, neighbors, p.extract.conv1_w, p.extract.conv1_b);
  nn::Matrix<T> a1 = nn::relu(h1);
  nn::Matrix<T> out = nn::sparse_conv(a1, neighbors, p.extract.conv2_w, p.extract.conv2_b);
  nn::add_inplace(out, emb);
  if (cache != nullptr) {
    cache->emb = std::move(emb);
    cache->a1 = std::move(a1);
    cache->parent_feats = out;
  }
  return out;
}

/// Replicates parent features onto children, adds the octant embedding and
/// runs a residual block on the child geometry.
template <typename T>
nn::Matrix<T> target_embed(const nn::Matrix<T>& parent_feats,
                           std::span<const std::int32_t> child_parent,
                           std::span<const int> child_octant,
                           const nn::NeighborIndex& child_neighbors, const TopParams<T>& p,
                           TrunkCache<T>* cache = nullptr)
{
  const std::size_t channels = parent_feats.cols();
  nn::Matrix<T> rep = nn::embed(p.octant_embedding, child_octant);
  for (std::size_t i = 0; i < child_parent.size(); ++i) {
    const std::int32_t j = child_parent[i];
    if (j < 0 || static_cast<std::size_t>(j) >= parent_feats.rows())
      throw Error(ErrorKind::MissingParent, "child row " + std::to_string(i) + " has no parent");
    const T* src = parent_feats.row(static_cast<std::size_t>(j));
    T* dst = rep.row(i);
    for (std::size_t c = 0; c < channels; ++c)
      dst[c] = src[c] + dst[c];
  }
  nn::Matrix<T> g1 = nn::sparse_conv(rep, child_neighbors, p.target.conv1_w, p.target.conv1_b);
  nn::Matrix<T> b1 = nn::relu(g1);
  nn::Matrix<T> out = nn::sparse_conv(b1, child_neighbors, p.target.conv2_w, p.target.conv2_b);
  nn::add_inplace(out, rep);
  if (cache != nullptr) {
    cache->replicated = std::move(rep);
    cache->b1 = std::move(b1);
    cache->feats = out;
  }
  return out;
}

template <typename T>
nn::Matrix<T> trunk(const ScaleGraph& g, const TopParams<T>& p, TrunkCache<T>* cache = nullptr)
{
  nn::Matrix<T> parent_feats = extract_features(g.parent_codes, *g.parent_neighbors, p, cache);
  return target_embed(parent_feats, g.child_parent, g.child_octant, *g.child_neighbors, p, cache);
}

/// softmax(fc2(relu(fc1(x)))).
template <typename T>
nn::Matrix<T> mlp_probs(const nn::Matrix<T>& x, const MlpParams<T>& m,
                        HeadCache<T>* cache = nullptr)
{
  nn::Matrix<T> hidden = nn::relu(nn::linear(x, m.fc1_w, m.fc1_b));
  nn::Matrix<T> probs = nn::softmax(nn::linear(hidden, m.fc2_w, m.fc2_b));
  if (cache != nullptr) {
    cache->input = x;
    cache->hidden = std::move(hidden);
    cache->probs = probs;
  }
  return probs;
}

template <typename T>
nn::Matrix<T> predict_s1(const nn::Matrix<T>& feats, const TopParams<T>& p,
                         HeadCache<T>* cache = nullptr)
{
  return mlp_probs(feats, p.head_s1, cache);
}

/// P(S2 | S1) from feats + Emb(s1).
template <typename T>
nn::Matrix<T> predict_s2(const nn::Matrix<T>& feats, std::span<const int> s1,
                         const TopParams<T>& p, HeadCache<T>* cache = nullptr)
{
  nn::Matrix<T> x = nn::embed(p.s1_embedding, s1);
  nn::add_inplace(x, feats);
  return mlp_probs(x, p.head_s2, cache);
}

template <typename T>
nn::Matrix<T> predict_one_stage(const nn::Matrix<T>& feats, const TopParams<T>& p,
                                HeadCache<T>* cache = nullptr)
{
  return mlp_probs(feats, p.head_one, cache);
}

/// Two-stage probabilities for the children's codes. With `true_s1` the S2
/// rows are conditioned on it; otherwise p_s2 is left empty.
ScalePredictionF predict(const ScaleLayer& layer, const SparseGeometry& children,
                         std::optional<std::span<const int>> true_s1,
                         const TopParams<float>& params);

// ---------------------------------------------------------------------------
// Reverse pass

template <typename T>
nn::Matrix<T> mlp_backward(const HeadCache<T>& cache, MlpParams<T>& m, std::span<const int> targets,
                           T scale)
{
  nn::Matrix<T> d_logits = nn::softmax_cross_entropy_grad(cache.probs, targets, scale);
  nn::Matrix<T> d_hidden;
  nn::linear_backward(cache.hidden, m.fc2_w, m.fc2_b, d_logits, &d_hidden);
  d_hidden = nn::relu_backward(cache.hidden, d_hidden);
  nn::Matrix<T> d_input;
  nn::linear_backward(cache.input, m.fc1_w, m.fc1_b, d_hidden, &d_input);
  return d_input;
}

/// Propagates d(loss)/d(feats) back through the trunk into the parameters.
template <typename T>
void trunk_backward(const ScaleGraph& g, const TrunkCache<T>& c, TopParams<T>& p,
                    const nn::Matrix<T>& d_feats)
{
  nn::Matrix<T> d_rep = d_feats;
  nn::Matrix<T> d_b1;
  nn::sparse_conv_backward(c.b1, *g.child_neighbors, p.target.conv2_w, p.target.conv2_b, d_feats,
                           &d_b1);
  nn::Matrix<T> d_g1 = nn::relu_backward(c.b1, d_b1);
  nn::Matrix<T> d_tmp;
  nn::sparse_conv_backward(c.replicated, *g.child_neighbors, p.target.conv1_w, p.target.conv1_b,
                           d_g1, &d_tmp);
  nn::add_inplace(d_rep, d_tmp);

  nn::embed_backward(d_rep, std::span<const int>(g.child_octant), p.octant_embedding);
  nn::Matrix<T> d_parent(c.parent_feats.rows(), c.parent_feats.cols());
  for (std::size_t i = 0; i < g.child_parent.size(); ++i) {
    T* dst = d_parent.row(static_cast<std::size_t>(g.child_parent[i]));
    const T* src = d_rep.row(i);
    for (std::size_t k = 0; k < d_parent.cols(); ++k)
      dst[k] += src[k];
  }

  nn::Matrix<T> d_emb = d_parent;
  nn::Matrix<T> d_a1;
  nn::sparse_conv_backward(c.a1, *g.parent_neighbors, p.extract.conv2_w, p.extract.conv2_b,
                           d_parent, &d_a1);
  nn::Matrix<T> d_h1 = nn::relu_backward(c.a1, d_a1);
  nn::sparse_conv_backward(c.emb, *g.parent_neighbors, p.extract.conv1_w, p.extract.conv1_b, d_h1,
                           &d_tmp);
  nn::add_inplace(d_emb, d_tmp);
  nn::embed_backward(d_emb, std::span<const int>(g.parent_codes), p.code_embedding);
}

struct ScaleLoss {
  double bits_s1 = 0.0;
  double bits_s2 = 0.0;
  double bits_one = 0.0;
  std::size_t symbols = 0;
  std::size_t clamped = 0;

  double two_stage_bits() const { return bits_s1 + bits_s2; }
};

/// Splits codes into S1 (high nibble) and S2 (low nibble) targets.
void split_codes(std::span<const std::uint8_t> codes, std::vector<int>& s1, std::vector<int>& s2);

/// Teacher-forced cross-entropy of one scale; when `grad_scale` is set,
/// accumulates scale * d(bits)/d(theta) into the parameter gradients. The
/// single-stage head contributes only when `one_stage` is true.
template <typename T>
ScaleLoss scale_loss(const ScaleGraph& g, std::span<const std::uint8_t> target_codes,
                     TopParams<T>& p, bool one_stage, std::optional<T> grad_scale)
{
  std::vector<int> s1, s2;
  split_codes(target_codes, s1, s2);

  TrunkCache<T> tc;
  nn::Matrix<T> feats = trunk(g, p, &tc);
  HeadCache<T> h1, h2, h3;
  predict_s1(feats, p, &h1);
  predict_s2(feats, s1, p, &h2);

  ScaleLoss loss;
  loss.symbols = target_codes.size();
  loss.bits_s1 = nn::cross_entropy_bits(h1.probs, s1, &loss.clamped);
  loss.bits_s2 = nn::cross_entropy_bits(h2.probs, s2, &loss.clamped);
  std::vector<int> classes;
  if (one_stage) {
    classes.reserve(target_codes.size());
    for (std::uint8_t code : target_codes)
      classes.push_back(static_cast<int>(code) - 1);
    predict_one_stage(feats, p, &h3);
    loss.bits_one = nn::cross_entropy_bits(h3.probs, classes, &loss.clamped);
  }

  if (!grad_scale)
    return loss;

  nn::Matrix<T> d_feats = mlp_backward(h1, p.head_s1, s1, *grad_scale);
  nn::Matrix<T> d_x2 = mlp_backward(h2, p.head_s2, s2, *grad_scale);
  nn::embed_backward(d_x2, std::span<const int>(s1), p.s1_embedding);
  nn::add_inplace(d_feats, d_x2);
  if (one_stage)
    nn::add_inplace(d_feats, mlp_backward(h3, p.head_one, classes, *grad_scale));
  trunk_backward(g, tc, p, d_feats);
  return loss;
}

// ---------------------------------------------------------------------------
// TopParams members

template <typename T>
TopParams<T> TopParams<T>::zeros(ModelConfig config)
{
  const std::size_t c = static_cast<std::size_t>(config.channels);
  const std::size_t vol = static_cast<std::size_t>(config.kernel * config.kernel * config.kernel);
  if (config.channels < 1 || config.kernel < 1 || config.kernel % 2 == 0)
    throw Error(ErrorKind::InvalidInput, "channels must be >= 1 and kernel odd");
  TopParams p;
  p.config = config;
  p.code_embedding = {"code_embedding", {256, c}};
  p.octant_embedding = {"octant_embedding", {8, c}};
  p.s1_embedding = {"s1_embedding", {16, c}};
  auto block = [&](const std::string& name) {
    ResBlockParams<T> b;
    b.conv1_w = {name + ".conv1.weight", {vol, c, c}};
    b.conv1_b = {name + ".conv1.bias", {c}};
    b.conv2_w = {name + ".conv2.weight", {vol, c, c}};
    b.conv2_b = {name + ".conv2.bias", {c}};
    return b;
  };
  auto mlp = [&](const std::string& name, std::size_t out) {
    MlpParams<T> m;
    m.fc1_w = {name + ".fc1.weight", {c, c}};
    m.fc1_b = {name + ".fc1.bias", {c}};
    m.fc2_w = {name + ".fc2.weight", {c, out}};
    m.fc2_b = {name + ".fc2.bias", {out}};
    return m;
  };
  p.extract = block("extract");
  p.target = block("target");
  p.head_s1 = mlp("head_s1", kSubSymbols);
  p.head_s2 = mlp("head_s2", kSubSymbols);
  p.head_one = mlp("head_one", kOneStageSymbols);
  return p;
}

template <typename T>
TopParams<T> TopParams<T>::initialized(ModelConfig config, std::uint64_t seed)
{
  TopParams p = zeros(config);
  std::mt19937_64 rng(seed);
  auto uniform = [&](nn::ParamTensor<T>& t, std::size_t fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (T& v : t.values)
      v = static_cast<T>(dist(rng));
  };
  auto normal = [&](nn::ParamTensor<T>& t) {
    std::normal_distribution<double> dist(0.0, 0.02);
    for (T& v : t.values)
      v = static_cast<T>(dist(rng));
  };
  const std::size_t c = static_cast<std::size_t>(config.channels);
  const std::size_t conv_fan = c * static_cast<std::size_t>(config.kernel * config.kernel *
                                                            config.kernel);
  normal(p.code_embedding);
  normal(p.octant_embedding);
  normal(p.s1_embedding);
  for (ResBlockParams<T>* b : {&p.extract, &p.target}) {
    uniform(b->conv1_w, conv_fan);
    uniform(b->conv1_b, conv_fan);
    uniform(b->conv2_w, conv_fan);
    uniform(b->conv2_b, conv_fan);
  }
  for (MlpParams<T>* m : {&p.head_s1, &p.head_s2, &p.head_one}) {
    uniform(m->fc1_w, c);
    uniform(m->fc1_b, c);
    uniform(m->fc2_w, c);
    uniform(m->fc2_b, c);
  }
  return p;
}

template <typename T>
std::vector<nn::ParamTensor<T>*> TopParams<T>::tensors()
{
  std::vector<nn::ParamTensor<T>*> out{&code_embedding, &octant_embedding, &s1_embedding};
  for (ResBlockParams<T>* b : {&extract, &target})
    out.insert(out.end(), {&b->conv1_w, &b->conv1_b, &b->conv2_w, &b->conv2_b});
  for (MlpParams<T>* m : {&head_s1, &head_s2, &head_one})
    out.insert(out.end(), {&m->fc1_w, &m->fc1_b, &m->fc2_w, &m->fc2_b});
  return out;
}

template <typename T>
std::vector<const nn::ParamTensor<T>*> TopParams<T>::tensors() const
{
  auto mut = const_cast<TopParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t TopParams<T>::parameter_count() const
{
  std::size_t n = 0;
  for (const auto* t : tensors())
    n += t->numel();
  return n;
}

template <typename T>
template <typename U>
TopParams<U> TopParams<T>::cast() const
{
  TopParams<U> out = TopParams<U>::zeros(config);
  auto src = tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i)
    for (std::size_t k = 0; k < src[i]->values.size(); ++k)
      dst[i]->values[k] = static_cast<U>(src[i]->values[k]);
  return out;
}

}  // namespace reno
