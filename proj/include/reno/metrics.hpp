// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reno/voxel.hpp"

namespace reno {

/// Exact nearest-neighbor index over a fixed point set.
class KdTree {
public:
  explicit KdTree(std::span<const Point3> points);

  /// Squared Euclidean distance from `q` to its nearest stored point.
  double nearest_squared(const Point3& q) const;

  std::size_t size() const noexcept { return points_.size(); }

private:
  struct Node {
    std::uint32_t begin, end;  // leaf range into order_, when axis < 0
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Point3& q, double& best) const;

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

struct DistortionReport {
  double d1_psnr_db = 0.0;
  double chamfer = 0.0;
  double mse_ab = 0.0;
  double mse_ba = 0.0;
};

std::string to_json(const DistortionReport& r, int indent = 2);

inline constexpr double kPsnrCapDb = 120.0;

/// Mean squared nearest-neighbor distance from each point of `a` into `b`.
double mean_squared_nn(const PointCloud& a, const PointCloud& b);

/// (1/2n) sum |a_i - NN(a_i, b)| + (1/2m) sum |b_j - NN(b_j, a)|.
double chamfer(const PointCloud& a, const PointCloud& b);

/// 10 log10(3 peak^2 / max(MSE_ab, MSE_ba)), capped at 120 dB.
double d1_psnr(const PointCloud& a, const PointCloud& b, double peak);

DistortionReport evaluate(const PointCloud& reference, const PointCloud& test, double peak);

// ---------------------------------------------------------------------------

enum class Scene { Plane, PlaneWithBoxes, Sphere };

Scene parse_scene(const std::string& name);
std::string to_string(Scene scene);

/// Spinning-sensor scan: `rings` fixed elevations, `points_per_ring`
/// azimuth samples each, with Gaussian noise on the measured range.
struct ScanConfig {
  std::uint64_t seed = 0;
  int rings = 32;
  int points_per_ring = 512;
  Scene scene = Scene::PlaneWithBoxes;
  double noise_sigma = 0.0;  // meters
};

PointCloud gen_scan(const ScanConfig& config);

}  // namespace reno
