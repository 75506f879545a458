// SPDX-License-Identifier: Apache-2.0
//
// reno: command-line front end for the learned point-cloud geometry codec.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "reno/codec.hpp"
#include "reno/error.hpp"
#include "reno/metrics.hpp"
#include "reno/nn/param_io.hpp"
#include "reno/ply_io.hpp"
#include "reno/top_model.hpp"
#include "reno/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

reno::TopParams<float> load_model(const std::string& path)
{
  return reno::load_params(reno::nn::read_file_bytes(path));
}

/// Inline JSON or a path to a JSON file.
json read_config(const std::string& arg)
{
  if (!arg.empty() && arg.front() == '{')
    return json::parse(arg);
  const auto bytes = reno::nn::read_file_bytes(arg);
  return json::parse(bytes.begin(), bytes.end());
}

struct SyntheticConfig {
  reno::ScanConfig scan;
  int count = 64;
  int heldout = 8;
  int depth = 10;
};

SyntheticConfig parse_synthetic(const json& j)
{
  SyntheticConfig c;
  c.scan.seed = j.value("seed", c.scan.seed);
  c.scan.rings = j.value("rings", c.scan.rings);
  c.scan.points_per_ring = j.value("points_per_ring", c.scan.points_per_ring);
  c.scan.scene = reno::parse_scene(j.value("scene", std::string("plane_with_boxes")));
  c.scan.noise_sigma = j.value("noise_sigma", c.scan.noise_sigma);
  c.count = j.value("count", c.count);
  c.heldout = j.value("heldout", c.heldout);
  c.depth = j.value("depth", c.depth);
  if (c.count < 1 || c.heldout < 0 || c.depth < 1 || c.depth > reno::kMaxDepth)
    throw reno::Error(reno::ErrorKind::InvalidInput, "synthetic config out of range");
  return c;
}

reno::PointFormat parse_format(const std::string& name)
{
  if (name == "ply")
    return reno::PointFormat::PlyBinaryFloat;
  if (name == "ply-double")
    return reno::PointFormat::PlyBinaryDouble;
  if (name == "ply-ascii")
    return reno::PointFormat::PlyAscii;
  if (name == "xyz")
    return reno::PointFormat::Xyz;
  throw reno::Error(reno::ErrorKind::InvalidInput, "unknown point format '" + name + "'");
}

void print(const json& j, bool as_json)
{
  if (as_json) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  for (const auto& [key, value] : j.items())
    std::cout << key << ": " << value.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Learned octree-occupancy codec for point-cloud geometry"};
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "Emit reports as JSON on stdout");

  // encode
  auto* encode = app.add_subcommand("encode", "Compress a point file");
  std::string enc_in, enc_out, enc_model;
  int enc_depth = 12;
  bool enc_one_stage = false;
  encode->add_option("--input", enc_in, "PLY or xyz point file")->required();
  encode->add_option("--output", enc_out, "Bitstream path")->required();
  encode->add_option("--depth", enc_depth, "Quantization depth in bits")
    ->check(CLI::Range(1, reno::kMaxDepth));
  encode->add_option("--model", enc_model, "Parameter file")->required();
  encode->add_flag("--one-stage", enc_one_stage, "Code each occupancy byte as one 255-ary symbol");

  // decode
  auto* decode = app.add_subcommand("decode", "Decompress a bitstream");
  std::string dec_in, dec_out, dec_model, dec_format = "ply";
  bool dec_strict = false;
  decode->add_option("--input", dec_in, "Bitstream path")->required();
  decode->add_option("--output", dec_out, "Output point file")->required();
  decode->add_option("--model", dec_model, "Parameter file")->required();
  decode->add_option("--format", dec_format, "ply | ply-double | ply-ascii | xyz");
  decode->add_flag("--strict-model", dec_strict, "Fail when the model id differs");

  // train
  auto* train = app.add_subcommand("train", "Fit the occupancy predictor");
  std::string tr_data, tr_synth, tr_out, tr_init;
  int tr_steps = 5000, tr_depth = 10, tr_channels = 32, tr_kernel = 3, tr_interval = 500;
  double tr_lr = 5e-4;
  std::uint64_t tr_seed = 0;
  auto* data_opt = train->add_option("--data", tr_data, "Directory of PLY/xyz files");
  auto* synth_opt =
    train->add_option("--synthetic", tr_synth, "Synthetic scan config (JSON text or file)");
  data_opt->excludes(synth_opt);
  train->add_option("--steps", tr_steps)->check(CLI::NonNegativeNumber);
  train->add_option("--lr", tr_lr)->check(CLI::PositiveNumber);
  train->add_option("--seed", tr_seed);
  train->add_option("--depth", tr_depth, "Depth for --data files")
    ->check(CLI::Range(1, reno::kMaxDepth));
  train->add_option("--channels", tr_channels)->check(CLI::PositiveNumber);
  train->add_option("--kernel", tr_kernel)->check(CLI::Range(1, 7));
  train->add_option("--checkpoint-interval", tr_interval)->check(CLI::NonNegativeNumber);
  train->add_option("--init", tr_init, "Start from this parameter file");
  train->add_option("--out", tr_out, "Output parameter file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Distortion between two point files");
  std::string ev_ref, ev_test;
  double ev_peak = 59.70;
  eval->add_option("--ref", ev_ref)->required();
  eval->add_option("--test", ev_test)->required();
  eval->add_option("--peak", ev_peak)->check(CLI::PositiveNumber);

  // bench
  auto* bench = app.add_subcommand("bench", "Stage timings for both coding modes");
  std::string be_in, be_model;
  int be_depth = 12, be_repeat = 3;
  bench->add_option("--input", be_in)->required();
  bench->add_option("--depth", be_depth)->check(CLI::Range(1, reno::kMaxDepth));
  bench->add_option("--repeat", be_repeat)->check(CLI::PositiveNumber);
  bench->add_option("--model", be_model)->required();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write synthetic scans as PLY files");
  std::string gen_config, gen_out;
  gen->add_option("--config", gen_config, "Synthetic scan config (JSON text or file)")
    ->required();
  gen->add_option("--out", gen_out, "Output directory")->required();

  // info
  auto* info = app.add_subcommand("info", "Describe a parameter file");
  std::string info_model;
  info->add_option("--model", info_model)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*encode) {
      const reno::PointCloud pc = reno::read_points(enc_in);
      reno::EncodeOptions opts;
      opts.mode = enc_one_stage ? reno::CodingMode::OneStage : reno::CodingMode::TwoStage;
      const auto result = reno::encode_file(pc, enc_depth, load_model(enc_model), opts);
      reno::nn::write_file_bytes(enc_out, result.bytes);
      print(json::parse(reno::to_json(result.summary)), as_json);
    } else if (*decode) {
      const auto bytes = reno::nn::read_file_bytes(dec_in);
      reno::DecodeOptions opts;
      opts.strict_model_id = dec_strict;
      const reno::DecodeResult r = reno::decode(bytes, load_model(dec_model), opts);
      if (!r.model_id_matches)
        std::cerr << "warning: bitstream was produced with a different model\n";
      const reno::PointCloud pc = reno::dequantize(r.geometry, r.transform);
      reno::write_points(pc, dec_out, parse_format(dec_format));
      print({{"points", pc.size()},
             {"depth", r.transform.depth},
             {"wall_ms", {{"pyramid", r.wall.pyramid_ms}, {"nn", r.wall.nn_ms},
                          {"ae", r.wall.ae_ms}}}},
            as_json);
    } else if (*train) {
      std::vector<reno::SparseGeometry> train_set, heldout;
      if (!tr_synth.empty()) {
        const SyntheticConfig c = parse_synthetic(read_config(tr_synth));
        train_set = reno::synthetic_dataset(c.scan, c.count, c.depth);
        reno::ScanConfig held = c.scan;
        held.seed = c.scan.seed + static_cast<std::uint64_t>(c.count);
        heldout = reno::synthetic_dataset(held, c.heldout, c.depth);
      } else if (!tr_data.empty()) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(tr_data))
          if (entry.is_regular_file())
            files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
          throw reno::Error(reno::ErrorKind::EmptyInput, "no files in " + tr_data);
        // Every eighth file is held out.
        for (std::size_t i = 0; i < files.size(); ++i) {
          auto g = reno::quantize(reno::read_points(files[i].string()), tr_depth).geometry;
          (files.size() > 1 && i % 8 == 7 ? heldout : train_set).push_back(std::move(g));
        }
      } else {
        throw CLI::RequiredError("--data or --synthetic");
      }
      reno::TrainConfig config;
      config.steps = tr_steps;
      config.lr = tr_lr;
      config.seed = tr_seed;
      config.model = {tr_channels, tr_kernel};
      config.checkpoint_interval = tr_interval;
      std::optional<reno::TopParams<float>> init;
      if (!tr_init.empty())
        init = load_model(tr_init);
      const auto start = std::chrono::steady_clock::now();
      const reno::TrainResult r =
        reno::train(train_set, heldout, config, std::move(init), [](const reno::Checkpoint& c) {
          std::cerr << "step " << c.step << ": held-out bpp " << c.heldout_bpp << "\n";
        });
      reno::nn::write_file_bytes(tr_out, reno::save_params(r.params));
      json j;
      j["steps"] = tr_steps;
      j["train_samples"] = train_set.size();
      j["heldout_samples"] = heldout.size();
      j["final_loss_bits_per_code"] = r.loss_curve.empty() ? 0.0 : r.loss_curve.back();
      j["checkpoints"] = json::array();
      for (const auto& c : r.checkpoints)
        j["checkpoints"].push_back({{"step", c.step}, {"heldout_bpp", c.heldout_bpp}});
      if (!heldout.empty()) {
        std::vector<reno::PreparedSample> prepared;
        for (const auto& g : heldout)
          prepared.push_back(reno::prepare_sample(g, r.params.config.kernel));
        j["uniform_bpp"] = reno::evaluate_heldout(prepared, r.params).uniform_bpp();
      }
      j["skipped_steps"] = r.skipped_steps;
      j["wall_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      j["model_id"] = reno::model_id(r.params);
      print(j, as_json);
    } else if (*eval) {
      const auto report =
        reno::evaluate(reno::read_points(ev_ref), reno::read_points(ev_test), ev_peak);
      print(json::parse(reno::to_json(report)), as_json);
    } else if (*bench) {
      const reno::PointCloud pc = reno::read_points(be_in);
      const reno::TopParams<float> params = load_model(be_model);
      const reno::Quantized q = reno::quantize(pc, be_depth);
      json j;
      j["points"] = pc.size();
      j["voxels"] = q.geometry.size();
      j["depth"] = be_depth;
      j["repeat"] = be_repeat;
      for (const auto mode : {reno::CodingMode::TwoStage, reno::CodingMode::OneStage}) {
        reno::EncodeOptions opts;
        opts.mode = mode;
        reno::StageTimes enc_best, dec_best;
        double bpp = 0.0;
        for (int i = 0; i < be_repeat; ++i) {
          const auto e = reno::encode(q.geometry, q.transform, params, opts);
          const auto d = reno::decode(e.bytes, params);
          if (!(d.geometry == q.geometry))
            throw reno::Error(reno::ErrorKind::CorruptStream, "bench round trip mismatch");
          bpp = 8.0 * static_cast<double>(e.summary.payload_bytes) /
                static_cast<double>(pc.size());
          if (i == 0 || e.summary.wall.total_ms() < enc_best.total_ms())
            enc_best = e.summary.wall;
          if (i == 0 || d.wall.total_ms() < dec_best.total_ms())
            dec_best = d.wall;
        }
        auto stage = [](const reno::StageTimes& t) {
          return json{{"pyramid", t.pyramid_ms}, {"nn", t.nn_ms}, {"ae", t.ae_ms},
                      {"total", t.total_ms()}};
        };
        j[mode == reno::CodingMode::TwoStage ? "two_stage" : "one_stage"] = {
          {"bpp", bpp}, {"encode_ms", stage(enc_best)}, {"decode_ms", stage(dec_best)}};
      }
      j["wall_ms"] = j["two_stage"]["encode_ms"];
      std::cout << j.dump(2) << "\n";
    } else if (*gen) {
      const SyntheticConfig c = parse_synthetic(read_config(gen_config));
      fs::create_directories(gen_out);
      for (int i = 0; i < c.count; ++i) {
        reno::ScanConfig s = c.scan;
        s.seed = c.scan.seed + static_cast<std::uint64_t>(i);
        char name[32];
        std::snprintf(name, sizeof(name), "scan_%04d.ply", i);
        reno::write_points(reno::gen_scan(s), (fs::path(gen_out) / name).string());
      }
      print({{"files", c.count}, {"out", gen_out}}, as_json);
    } else if (*info) {
      const auto bytes = reno::nn::read_file_bytes(info_model);
      const reno::TopParams<float> p = reno::load_params(bytes);
      const std::size_t count = p.parameter_count();
      print({{"channels", p.config.channels},
             {"kernel", p.config.kernel},
             {"parameter_count", count},
             {"parameter_bytes", count * sizeof(float)},
             {"file_bytes", bytes.size()},
             {"model_id", reno::model_id(p)}},
            as_json);
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
