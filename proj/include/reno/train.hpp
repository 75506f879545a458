// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "reno/metrics.hpp"
#include "reno/top_model.hpp"

namespace reno {

struct TrainConfig {
  int steps = 5000;
  double lr = 5e-4;
  std::uint64_t seed = 0;
  ModelConfig model;
  int checkpoint_interval = 500;  // 0 disables held-out evaluation during training
  bool one_stage = true;          // also fit the 255-ary head on the shared trunk
};

struct Checkpoint {
  int step = 0;
  double heldout_bpp = 0.0;
};

struct TrainResult {
  TopParams<float> params;
  std::vector<double> loss_curve;  // two-stage bits per code, one entry per step
  std::vector<Checkpoint> checkpoints;
  std::int64_t skipped_steps = 0;
};

/// Per-sample bits under the two-stage heads, plus 8 bits for the root code.
struct HeldoutStats {
  double bits = 0.0;
  double uniform_bits = 0.0;  // 8 bits per code
  std::size_t points = 0;

  double bpp() const { return points ? bits / static_cast<double>(points) : 0.0; }
  double uniform_bpp() const { return points ? uniform_bits / static_cast<double>(points) : 0.0; }
};

/// Pyramid and neighbor tables of one training sample, built once.
struct PreparedSample {
  std::vector<ScaleGraph> graphs;  // entry d-1 predicts layers[d].codes
  std::vector<std::vector<std::uint8_t>> targets;
  std::size_t points = 0;
  std::size_t codes = 0;  // codes over scales 1..D-1
};

PreparedSample prepare_sample(const SparseGeometry& g, int kernel);

HeldoutStats evaluate_heldout(std::span<const PreparedSample> samples,
                              const TopParams<float>& params);

/// Adam on one random training sample per step. `progress` is called at
/// every checkpoint. Throws NonFiniteLoss if a step's loss is not finite.
TrainResult train(std::span<const SparseGeometry> train_set,
                  std::span<const SparseGeometry> heldout_set, const TrainConfig& config,
                  std::optional<TopParams<float>> initial = std::nullopt,
                  const std::function<void(const Checkpoint&)>& progress = {});

/// Scans with seeds base.seed, base.seed + 1, ... quantized at `depth`.
std::vector<SparseGeometry> synthetic_dataset(const ScanConfig& base, int count, int depth);

}  // namespace reno
