// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
//
//   acceptance [--model PATH] [--save-model PATH] [--report PATH]
//
// --model skips training and reports criterion 5 as FAIL (not measured).

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "gradcheck.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "reno/codec.hpp"
#include "reno/entropy.hpp"
#include "reno/metrics.hpp"
#include "reno/nn/param_io.hpp"
#include "reno/occupancy.hpp"
#include "reno/parallel.hpp"
#include "reno/train.hpp"

using namespace reno;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

json g_report = json::object();

bool report(int id, const std::string& name, const Outcome& o)
{
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name
            << "): " << o.detail << std::endl;
  g_report[std::to_string(id)] = {{"name", name}, {"pass", o.pass}, {"detail", o.detail}};
  return o.pass;
}

std::string fmt(double v, int precision = 3)
{
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome lossless_round_trip()
{
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::array<TopParams<float>, 3> params{TopParams<float>::initialized({}, rng()),
                                         TopParams<float>::initialized({}, rng()),
                                         TopParams<float>::initialized({}, rng())};
  int failures = 0;
  std::size_t voxels = 0;
  for (int i = 0; i < 200; ++i) {
    const int depth = 4 + i % 5;
    const std::size_t capacity = std::size_t{1} << (3 * depth);
    const std::size_t n = std::min<std::size_t>(10 + rng() % 4991, capacity);
    auto coords = i % 2 == 0 ? oracle::random_coords(rng, depth, n)
                             : oracle::walk_coords(rng, depth, n);
    const SparseGeometry g = SparseGeometry::from_unsorted(depth, std::move(coords));
    voxels += g.size();
    for (const auto& p : params) {
      const auto enc = encode(g, {{0, 0, 0}, 1.0, depth}, p);
      failures += decode(enc.bytes, p).geometry != g;
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 120.0,
          "600 round trips (" + std::to_string(voxels) + " voxels per seed), " +
            std::to_string(failures) + " mismatches, " + fmt(secs, 1) + " s (limit 120 s)"};
}

Outcome representation_oracle()
{
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  int mismatches = 0;
  for (int i = 0; i < 50; ++i) {
    const int depth = 1 + i % 8;
    const std::size_t n = 1 + rng() % 2000;
    auto coords = i % 2 == 0 ? oracle::random_coords(rng, depth, n)
                             : oracle::walk_coords(rng, depth, n);
    const SparseGeometry g = SparseGeometry::from_unsorted(depth, coords);
    const Pyramid pyr = build_pyramid(g);
    const auto levels = oracle::brute_octree(g.coords(), depth);
    bool same = pyr.layers.size() == levels.size();
    for (std::size_t d = 0; same && d < levels.size(); ++d) {
      const ScaleLayer& layer = pyr.layers[d];
      same = layer.parents.size() == levels[d].codes.size();
      for (std::size_t k = 0; same && k < layer.parents.size(); ++k) {
        const Coord& c = layer.parents.coords()[k];
        const auto it = levels[d].codes.find({c.x, c.y, c.z});
        same = it != levels[d].codes.end() && it->second == layer.codes[k];
      }
    }
    mismatches += !same;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 60.0, "50 clouds, " + std::to_string(mismatches) +
                                            " mismatching pyramids, " + fmt(secs, 1) +
                                            " s (limit 60 s)"};
}

Outcome coder_optimality()
{
  const auto t0 = Clock::now();
  constexpr std::size_t n = 1'000'000;
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(1.0);
  std::vector<CdfTable> cdfs;
  cdfs.reserve(n);
  std::vector<int> symbols(n);
  double ideal_bits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, 16> p{};
    double s = 0;
    for (double& v : p)
      s += v = e(rng);
    for (double& v : p)
      v /= s;
    cdfs.push_back(quantize_probs(std::span<const double>(p)));
    std::discrete_distribution<int> draw(p.begin(), p.end());
    symbols[i] = draw(rng);
    ideal_bits += cdfs.back().cost_bits(static_cast<std::size_t>(symbols[i]));
  }
  const auto bytes = range_encode(symbols, cdfs);
  const bool exact = range_decode(bytes, cdfs) == symbols;
  const double bound = ideal_bits / 8 * 1.001 + 16;
  const double secs = seconds_since(t0);
  return {exact && static_cast<double>(bytes.size()) <= bound && secs < 30.0,
          std::to_string(bytes.size()) + " bytes vs bound " + fmt(bound, 1) + " (ideal " +
            fmt(ideal_bits / 8, 1) + "), round trip " + (exact ? "exact" : "BROKEN") + ", " +
            fmt(secs, 1) + " s (limit 30 s)"};
}

Outcome gradient_correctness()
{
  const auto t0 = Clock::now();
  using Check = gradcheck::Result (*)(std::uint64_t);
  const std::array<std::pair<const char*, Check>, 6> checks{{
    {"embed", gradcheck::check_embed},
    {"sparse_conv", gradcheck::check_sparse_conv},
    {"linear", gradcheck::check_linear},
    {"relu", gradcheck::check_relu},
    {"softmax_cross_entropy", gradcheck::check_softmax_cross_entropy},
    {"top", gradcheck::check_top},
  }};
  double worst = 0;
  std::string worst_name;
  for (const auto& [name, check] : checks) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const double err = check(1000 + seed).max_rel_error;
      if (!(err <= worst)) {
        worst = err;
        worst_name = name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 120.0,
          "6 checks x 20 instances, worst relative error " + std::to_string(worst) + " (" +
            worst_name + "), " + fmt(secs, 1) + " s (limit 120 s)"};
}

ScanConfig scan_config(std::uint64_t seed)
{
  ScanConfig c;
  c.seed = seed;
  c.rings = 32;
  c.points_per_ring = 512;
  c.scene = Scene::PlaneWithBoxes;
  c.noise_sigma = 0.01;
  return c;
}

Outcome learning_effect(const std::vector<SparseGeometry>& heldout, TopParams<float>& trained)
{
  const auto t0 = Clock::now();
  const auto train_set = synthetic_dataset(scan_config(1000), 64, 10);
  TrainConfig config;
  config.steps = 5000;
  config.lr = 5e-4;
  config.seed = 1;
  config.checkpoint_interval = 500;
  TrainResult r = train(train_set, heldout, config, std::nullopt, [](const Checkpoint& c) {
    std::cout << "  step " << c.step << ": held-out " << fmt(c.heldout_bpp, 4) << " bpp"
              << std::endl;
  });
  trained = std::move(r.params);
  const double secs = seconds_since(t0);

  std::vector<PreparedSample> prepared;
  for (const auto& g : heldout)
    prepared.push_back(prepare_sample(g, 3));
  const HeldoutStats s = evaluate_heldout(prepared, trained);
  const double ratio = s.bpp() / s.uniform_bpp();
  json curve = json::array();
  for (const auto& c : r.checkpoints)
    curve.push_back({{"step", c.step}, {"heldout_bpp", c.heldout_bpp}});
  g_report["training_curve"] = curve;
  return {ratio <= 0.80 && secs < 1800.0,
          "held-out " + fmt(s.bpp(), 4) + " bpp vs uniform " + fmt(s.uniform_bpp(), 4) +
            " bpp, ratio " + fmt(ratio, 4) + " (limit 0.80), " + fmt(secs, 0) +
            " s (limit 1800 s)"};
}

Outcome two_vs_one_stage(const std::vector<SparseGeometry>& heldout,
                         const TopParams<float>& model)
{
  double ae_two = 0, ae_one = 0, bits_two = 0, bits_one = 0;
  for (const auto& g : heldout) {
    const QuantizationTransform t{{0, 0, 0}, 1.0, g.depth()};
    double best_two = 1e300, best_one = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto two = encode(g, t, model, {CodingMode::TwoStage});
      const auto one = encode(g, t, model, {CodingMode::OneStage});
      best_two = std::min(best_two, two.summary.wall.ae_ms);
      best_one = std::min(best_one, one.summary.wall.ae_ms);
      if (rep == 0) {
        bits_two += 8.0 * static_cast<double>(two.summary.payload_bytes);
        bits_one += 8.0 * static_cast<double>(one.summary.payload_bytes);
      }
    }
    ae_two += best_two;
    ae_one += best_one;
  }
  const double gap = std::abs(bits_two - bits_one) / bits_one;
  return {ae_two <= ae_one && gap <= 0.05,
          "AE " + fmt(ae_two, 1) + " ms two-stage vs " + fmt(ae_one, 1) +
            " ms one-stage; payload " + fmt(bits_two / 8, 0) + " vs " + fmt(bits_one / 8, 0) +
            " bytes, gap " + fmt(100 * gap, 2) + "% (limit 5%)"};
}

Outcome throughput(const TopParams<float>& model)
{
  ScanConfig c = scan_config(9001);
  c.rings = 64;
  c.points_per_ring = 2048;
  PointCloud pc = gen_scan(c);
  if (pc.size() < 100000)
    return {false, "synthetic scan has only " + std::to_string(pc.size()) + " points"};
  pc.points.resize(100000);

  set_worker_threads(1);
  const auto t0 = Clock::now();
  const EncodeResult enc = encode_file(pc, 12, model);
  const auto t1 = Clock::now();
  const DecodeResult dec = decode(enc.bytes, model);
  const double encode_s = std::chrono::duration<double>(t1 - t0).count();
  const double secs = seconds_since(t0);
  set_worker_threads(0);

  json stages = json::parse(to_json(enc.summary));
  stages["decode_ms"] = {{"expand", dec.wall.pyramid_ms},
                         {"nn", dec.wall.nn_ms},
                         {"ae", dec.wall.ae_ms}};
  stages["total_s"] = secs;
  std::cout << "  stage breakdown: " << stages.dump() << std::endl;
  g_report["throughput"] = stages;
  const bool exact = dec.geometry.size() == enc.summary.voxels;
  return {exact && secs < 2.0,
          "100000 points, " + std::to_string(enc.summary.voxels) + " voxels at depth 12, encode " +
            fmt(encode_s, 3) + " s + decode " + fmt(secs - encode_s, 3) + " s = " +
            fmt(secs, 3) + " s single-threaded (limit 2 s), " + fmt(enc.summary.bpp, 3) + " bpp"};
}

Outcome metrics_examples()
{
  const PointCloud origin{{{0.0, 0.0, 0.0}}};
  const PointCloud unit{{{1.0, 0.0, 0.0}}};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  PointCloud cloud;
  for (int i = 0; i < 1000; ++i)
    cloud.points.push_back({u(rng), u(rng), u(rng)});

  const double self_chamfer = chamfer(cloud, cloud);
  const double self_psnr = d1_psnr(cloud, cloud, 59.70);
  const double pair_chamfer = chamfer(origin, unit);
  const double pair_psnr = d1_psnr(origin, unit, 59.70);
  // 10 log10(3 * 59.70^2), evaluated independently.
  const double expected_psnr = 40.290699169784;
  const bool pass = self_chamfer == 0.0 && self_psnr == 120.0 && pair_chamfer == 1.0 &&
                    std::abs(pair_psnr - expected_psnr) <= 1e-9 &&
                    chamfer(origin, unit) == chamfer(unit, origin);
  return {pass, "identical chamfer " + fmt(self_chamfer, 6) + ", identical PSNR " +
                  fmt(self_psnr, 2) + " dB, pair chamfer " + fmt(pair_chamfer, 6) +
                  ", pair PSNR " + fmt(pair_psnr, 6) + " dB (expected " +
                  fmt(expected_psnr, 6) + ")"};
}

Outcome model_size(const std::string& model_path)
{
  const std::string cmd = std::string(RENO_CLI) + " info --json --model " + model_path;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr)
    return {false, "could not run " + cmd};
  std::string out;
  std::array<char, 1024> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0)
    out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    return {false, "info exited with status " + std::to_string(status)};
  const json j = json::parse(out);
  const auto bytes = j["parameter_bytes"].get<std::size_t>();
  const auto file_bytes = j["file_bytes"].get<std::size_t>();
  return {bytes < 1'500'000 && j["channels"] == 32 && j["kernel"] == 3,
          "c" + j["channels"].dump() + " k" + j["kernel"].dump() + ": " +
            j["parameter_count"].dump() + " parameters, " + std::to_string(bytes) +
            " parameter bytes, " + std::to_string(file_bytes) + " file bytes (limit 1500000)"};
}

}  // namespace

int main(int argc, char** argv)
{
  std::string model_in, model_out = "acceptance_model.rnnw", report_path;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--model")
      model_in = argv[i + 1];
    else if (flag == "--save-model")
      model_out = argv[i + 1];
    else if (flag == "--report")
      report_path = argv[i + 1];
  }

  int failed = 0;
  auto run = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !report(id, name, o);
  };

  run(1, "lossless round trip", lossless_round_trip);
  run(2, "representation oracle", representation_oracle);
  run(3, "range coder optimality", coder_optimality);
  run(4, "gradient correctness", gradient_correctness);

  const auto heldout = synthetic_dataset(scan_config(5000), 8, 10);
  TopParams<float> model;
  if (model_in.empty()) {
    run(5, "learning effect", [&] { return learning_effect(heldout, model); });
    nn::write_file_bytes(model_out, save_params(model));
  } else {
    model = load_params(nn::read_file_bytes(model_in));
    model_out = model_in;
    report(5, "learning effect", {false, "not measured: pretrained model supplied"});
    ++failed;
  }

  run(6, "two-stage vs one-stage", [&] { return two_vs_one_stage(heldout, model); });
  run(7, "throughput", [&] { return throughput(model); });
  run(8, "metrics", metrics_examples);
  run(9, "model size", [&] { return model_size(model_out); });

  if (!report_path.empty())
    nn::write_file_bytes(report_path, [&] {
      const std::string s = g_report.dump(2) + "\n";
      return std::vector<std::uint8_t>(s.begin(), s.end());
    }());
  std::cout << (failed == 0 ? "ALL CRITERIA PASSED" : std::to_string(failed) + " CRITERIA FAILED")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
