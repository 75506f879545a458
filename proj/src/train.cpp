// SPDX-License-Identifier: Apache-2.0

#include "reno/train.hpp"

#include <cmath>
#include <random>

#include "reno/error.hpp"
#include "reno/nn/adam.hpp"

namespace reno {

PreparedSample prepare_sample(const SparseGeometry& g, int kernel)
{
  const Pyramid pyr = build_pyramid(g);
  PreparedSample s;
  s.points = g.size();
  std::shared_ptr<const nn::NeighborIndex> parent_nbr;
  for (std::size_t d = 1; d < pyr.layers.size(); ++d) {
    const ScaleLayer& prev = pyr.layers[d - 1];
    const ScaleLayer& cur = pyr.layers[d];
    auto child_nbr = std::make_shared<const nn::NeighborIndex>(cur.parents.span(), kernel);
    s.graphs.push_back(ScaleGraph::build(prev.parents.span(), prev.codes, cur.parents.span(),
                                         kernel, parent_nbr, child_nbr));
    parent_nbr = child_nbr;
    s.targets.push_back(cur.codes);
    s.codes += cur.codes.size();
  }
  return s;
}

HeldoutStats evaluate_heldout(std::span<const PreparedSample> samples,
                              const TopParams<float>& params)
{
  // scale_loss takes mutable params for gradient accumulation; none happens here.
  TopParams<float>& p = const_cast<TopParams<float>&>(params);
  HeldoutStats out;
  for (const PreparedSample& s : samples) {
    out.bits += 8.0;
    out.uniform_bits += 8.0 * static_cast<double>(s.codes + 1);
    out.points += s.points;
    for (std::size_t k = 0; k < s.graphs.size(); ++k)
      out.bits += scale_loss<float>(s.graphs[k], s.targets[k], p, false, std::nullopt)
                    .two_stage_bits();
  }
  return out;
}

TrainResult train(std::span<const SparseGeometry> train_set,
                  std::span<const SparseGeometry> heldout_set, const TrainConfig& config,
                  std::optional<TopParams<float>> initial,
                  const std::function<void(const Checkpoint&)>& progress)
{
  if (train_set.empty())
    throw Error(ErrorKind::EmptyInput, "training set is empty");
  if (config.steps < 0 || !(config.lr > 0.0))
    throw Error(ErrorKind::InvalidInput, "steps must be >= 0 and lr positive");

  TrainResult result{initial ? std::move(*initial)
                             : TopParams<float>::initialized(config.model, config.seed),
                     {}, {}, 0};
  const int kernel = result.params.config.kernel;

  std::vector<PreparedSample> train_samples;
  for (const SparseGeometry& g : train_set)
    train_samples.push_back(prepare_sample(g, kernel));
  std::vector<PreparedSample> heldout;
  for (const SparseGeometry& g : heldout_set)
    heldout.push_back(prepare_sample(g, kernel));

  nn::AdamConfig adam_config;
  adam_config.lr = config.lr;
  nn::Adam<float> adam(result.params.tensors(), adam_config);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<std::size_t> pick(0, train_samples.size() - 1);

  auto checkpoint = [&](int step) {
    if (heldout.empty())
      return;
    const Checkpoint c{step, evaluate_heldout(heldout, result.params).bpp()};
    result.checkpoints.push_back(c);
    if (progress)
      progress(c);
  };

  for (int step = 1; step <= config.steps; ++step) {
    const PreparedSample& s = train_samples[pick(rng)];
    if (s.codes == 0) {
      result.loss_curve.push_back(0.0);
      continue;
    }
    adam.zero_grad();
    const float scale = 1.0f / static_cast<float>(s.codes);
    double bits = 0.0;
    double bits_one = 0.0;
    for (std::size_t k = 0; k < s.graphs.size(); ++k) {
      const ScaleLoss l =
        scale_loss<float>(s.graphs[k], s.targets[k], result.params, config.one_stage, scale);
      bits += l.two_stage_bits();
      bits_one += l.bits_one;
    }
    if (!std::isfinite(bits) || !std::isfinite(bits_one))
      throw Error(ErrorKind::NonFiniteLoss,
                  "non-finite loss at step " + std::to_string(step));
    result.loss_curve.push_back(bits / static_cast<double>(s.codes));
    adam.step();
    if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0)
      checkpoint(step);
  }
  if (config.checkpoint_interval <= 0 || config.steps % config.checkpoint_interval != 0 ||
      config.steps == 0)
    checkpoint(config.steps);
  result.skipped_steps = adam.skipped();
  return result;
}

std::vector<SparseGeometry> synthetic_dataset(const ScanConfig& base, int count, int depth)
{
  std::vector<SparseGeometry> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    ScanConfig c = base;
    c.seed = base.seed + static_cast<std::uint64_t>(i);
    out.push_back(quantize(gen_scan(c), depth).geometry);
  }
  return out;
}

}  // namespace reno
