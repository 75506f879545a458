// SPDX-License-Identifier: Apache-2.0

#include "reno/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "json.hpp"

#include "reno/error.hpp"

namespace reno {

namespace {

constexpr std::uint32_t kLeafSize = 8;

double sq(double v) { return v * v; }

double dist2(const Point3& a, const Point3& b)
{
  return sq(a[0] - b[0]) + sq(a[1] - b[1]) + sq(a[2] - b[2]);
}

void require_points(const PointCloud& a, const PointCloud& b)
{
  if (a.empty() || b.empty())
    throw Error(ErrorKind::EmptyInput, "distortion metrics need non-empty clouds");
}

}  // namespace

KdTree::KdTree(std::span<const Point3> points) : points_(points.begin(), points.end())
{
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty())
    build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end)
{
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize)
    return id;

  Point3 lo = points_[order_[begin]];
  Point3 hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], points_[order_[i]][a]);
      hi[a] = std::max(hi[a], points_[order_[i]][a]);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (hi[a] - lo[a] > hi[axis] - lo[axis])
      axis = a;
  if (hi[axis] - lo[axis] <= 0.0)
    return id;  // all coincident: keep as a leaf

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t x, std::uint32_t y) {
                     return points_[x][axis] < points_[y][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& n = nodes_[static_cast<std::size_t>(id)];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void KdTree::search(std::int32_t node, const Point3& q, double& best) const
{
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  if (n.axis < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i)
      best = std::min(best, dist2(q, points_[order_[i]]));
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::int32_t near = diff < 0.0 ? n.left : n.right;
  const std::int32_t far = diff < 0.0 ? n.right : n.left;
  search(near, q, best);
  if (diff * diff <= best)
    search(far, q, best);
}

double KdTree::nearest_squared(const Point3& q) const
{
  if (points_.empty())
    throw Error(ErrorKind::EmptyInput, "nearest-neighbor query on an empty index");
  double best = std::numeric_limits<double>::infinity();
  search(0, q, best);
  return best;
}

double mean_squared_nn(const PointCloud& a, const PointCloud& b)
{
  require_points(a, b);
  const KdTree tree(b.points);
  double sum = 0.0;
  for (const Point3& p : a.points)
    sum += tree.nearest_squared(p);
  return sum / static_cast<double>(a.size());
}

namespace {

double mean_nn_distance(const PointCloud& a, const KdTree& tree_b)
{
  double sum = 0.0;
  for (const Point3& p : a.points)
    sum += std::sqrt(tree_b.nearest_squared(p));
  return sum / static_cast<double>(a.size());
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b)
{
  require_points(a, b);
  const KdTree ta(a.points);
  const KdTree tb(b.points);
  // Summed in a fixed order so that chamfer(a, b) == chamfer(b, a) exactly.
  const double ab = mean_nn_distance(a, tb);
  const double ba = mean_nn_distance(b, ta);
  return 0.5 * std::min(ab, ba) + 0.5 * std::max(ab, ba);
}

double d1_psnr(const PointCloud& a, const PointCloud& b, double peak)
{
  return evaluate(a, b, peak).d1_psnr_db;
}

DistortionReport evaluate(const PointCloud& reference, const PointCloud& test, double peak)
{
  require_points(reference, test);
  if (!(peak > 0.0))
    throw Error(ErrorKind::InvalidInput, "PSNR peak must be positive");
  DistortionReport r;
  r.mse_ab = mean_squared_nn(reference, test);
  r.mse_ba = mean_squared_nn(test, reference);
  const double mse = std::max(r.mse_ab, r.mse_ba);
  r.d1_psnr_db = mse > 0.0 ? std::min(kPsnrCapDb, 10.0 * std::log10(3.0 * peak * peak / mse))
                           : kPsnrCapDb;
  r.chamfer = chamfer(reference, test);
  return r;
}

std::string to_json(const DistortionReport& r, int indent)
{
  nlohmann::json j;
  j["d1_psnr_db"] = r.d1_psnr_db;
  j["chamfer"] = r.chamfer;
  j["mse_ab"] = r.mse_ab;
  j["mse_ba"] = r.mse_ba;
  return j.dump(indent);
}

// ---------------------------------------------------------------------------
// Synthetic scans

Scene parse_scene(const std::string& name)
{
  if (name == "plane")
    return Scene::Plane;
  if (name == "plane_with_boxes")
    return Scene::PlaneWithBoxes;
  if (name == "sphere")
    return Scene::Sphere;
  throw Error(ErrorKind::InvalidInput, "unknown scene '" + name + "'");
}

std::string to_string(Scene scene)
{
  switch (scene) {
  case Scene::Plane: return "plane";
  case Scene::PlaneWithBoxes: return "plane_with_boxes";
  case Scene::Sphere: return "sphere";
  }
  return "plane";
}

namespace {

constexpr double kSensorHeight = 1.73;
constexpr double kMaxRange = 100.0;
constexpr double kTopElevationDeg = 2.0;
constexpr double kElevationSpanDeg = 26.8;
constexpr double kSphereRadius = 25.0;

struct Box {
  Point3 lo, hi;
};

/// Ray/box slab test; returns the entry distance or +inf.
double hit_box(const Point3& o, const Point3& dir, const Box& b)
{
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-12) {
      if (o[a] < b.lo[a] || o[a] > b.hi[a])
        return std::numeric_limits<double>::infinity();
      continue;
    }
    double ta = (b.lo[a] - o[a]) / dir[a];
    double tb = (b.hi[a] - o[a]) / dir[a];
    if (ta > tb)
      std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1)
      return std::numeric_limits<double>::infinity();
  }
  return t0 > 0.0 ? t0 : std::numeric_limits<double>::infinity();
}

}  // namespace

PointCloud gen_scan(const ScanConfig& config)
{
  if (config.rings < 1 || config.points_per_ring < 1)
    throw Error(ErrorKind::InvalidInput, "scan needs at least one ring and one point per ring");

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<Box> boxes;
  if (config.scene == Scene::PlaneWithBoxes) {
    const int count = 6 + static_cast<int>(unit(rng) * 7.0);
    for (int i = 0; i < count; ++i) {
      const double radius = 6.0 + 34.0 * unit(rng);
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      const double sx = 1.5 + 4.5 * unit(rng);
      const double sy = 1.5 + 4.5 * unit(rng);
      const double h = 1.2 + 2.8 * unit(rng);
      const double cx = radius * std::cos(angle);
      const double cy = radius * std::sin(angle);
      boxes.push_back({{cx - sx / 2, cy - sy / 2, 0.0}, {cx + sx / 2, cy + sy / 2, h}});
    }
  }

  const Point3 origin{0.0, 0.0, kSensorHeight};
  PointCloud pc;
  pc.points.reserve(static_cast<std::size_t>(config.rings) *
                    static_cast<std::size_t>(config.points_per_ring));
  const double deg = std::numbers::pi / 180.0;

  for (int r = 0; r < config.rings; ++r) {
    const double elevation =
      (kTopElevationDeg - kElevationSpanDeg * (r + 0.5) / config.rings) * deg;
    const double phase = unit(rng) * 2.0 * std::numbers::pi / config.points_per_ring;
    for (int k = 0; k < config.points_per_ring; ++k) {
      const double azimuth = phase + 2.0 * std::numbers::pi * k / config.points_per_ring;
      const Point3 dir{std::cos(elevation) * std::cos(azimuth),
                       std::cos(elevation) * std::sin(azimuth), std::sin(elevation)};
      double t = std::numeric_limits<double>::infinity();
      if (config.scene == Scene::Sphere) {
        t = kSphereRadius;
      } else {
        if (dir[2] < 0.0)
          t = kSensorHeight / -dir[2];
        for (const Box& b : boxes)
          t = std::min(t, hit_box(origin, dir, b));
      }
      const double jitter = config.noise_sigma > 0.0 ? config.noise_sigma * noise(rng) : 0.0;
      if (!(t <= kMaxRange))
        continue;
      t += jitter;
      pc.points.push_back(
        {origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]});
    }
  }
  return pc;
}

}  // namespace reno
