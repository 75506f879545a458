// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "reno/codec.hpp"
#include "reno/nn/param_io.hpp"
#include "reno/ply_io.hpp"

using namespace reno;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status = -1;
  std::string out;
};

CliRun run(const std::string& args)
{
  const std::string cmd = std::string(RENO_CLI) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr)
    return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0)
    r.out.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override
  {
    dir_ = fs::temp_directory_path() / ("reno_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const std::string kModel = RENO_MODEL_DIR "/init_c32k3.rnnw";
const std::string kScan = RENO_TEST_DATA "/vector_scan.ply";

}  // namespace

TEST_F(Cli, EncodeDecodeRecoversTheVoxelSet)
{
  const CliRun enc = run("encode --json --input " + kScan + " --output " + path("s.reno") +
                      " --depth 10 --model " + kModel);
  ASSERT_EQ(enc.status, 0);
  const json summary = json::parse(enc.out);
  EXPECT_EQ(nn::read_file_bytes(path("s.reno")),
            nn::read_file_bytes(RENO_TEST_DATA "/vector_scan_d10.reno"));

  ASSERT_EQ(run("decode --input " + path("s.reno") + " --output " + path("d.ply") +
                " --format ply-double --model " + kModel)
              .status,
            0);
  const PointCloud decoded = read_points(path("d.ply"));
  EXPECT_EQ(decoded.size(), summary["voxels"].get<std::size_t>());

  // Snap decoded points back onto the lattice and compare voxel sets exactly.
  const Quantized ref = quantize(read_points(kScan), 10);
  std::vector<Coord> coords;
  for (const Point3& p : decoded.points) {
    Coord c;
    c.x = static_cast<std::uint32_t>(std::lround((p[0] - ref.transform.origin[0]) / ref.transform.step));
    c.y = static_cast<std::uint32_t>(std::lround((p[1] - ref.transform.origin[1]) / ref.transform.step));
    c.z = static_cast<std::uint32_t>(std::lround((p[2] - ref.transform.origin[2]) / ref.transform.step));
    coords.push_back(c);
  }
  EXPECT_EQ(SparseGeometry::from_unsorted(10, coords), ref.geometry);
}

TEST_F(Cli, OneStageRoundTrip)
{
  ASSERT_EQ(run("encode --one-stage --input " + kScan + " --output " + path("o.reno") +
                " --depth 8 --model " + kModel)
              .status,
            0);
  ASSERT_EQ(run("decode --input " + path("o.reno") + " --output " + path("o.xyz") +
                " --format xyz --model " + kModel)
              .status,
            0);
  EXPECT_EQ(read_points(path("o.xyz")).size(), quantize(read_points(kScan), 8).geometry.size());
}

TEST_F(Cli, InfoReportsParameterCount)
{
  const CliRun r = run("info --json --model " + kModel);
  ASSERT_EQ(r.status, 0);
  const json j = json::parse(r.out);
  EXPECT_EQ(j["parameter_count"].get<std::size_t>(), 132319u);
  EXPECT_LT(j["parameter_count"].get<std::size_t>(), 300000u);
  EXPECT_EQ(j["channels"].get<int>(), 32);
  EXPECT_EQ(j["kernel"].get<int>(), 3);
  EXPECT_EQ(j["model_id"].get<std::uint64_t>(), nn::fnv1a64(nn::read_file_bytes(kModel)));
}

TEST_F(Cli, BenchEmitsStageTimings)
{
  const CliRun r = run("bench --json --input " + kScan + " --depth 8 --repeat 1 --model " + kModel);
  ASSERT_EQ(r.status, 0);
  const json j = json::parse(r.out);
  for (const char* mode : {"two_stage", "one_stage"}) {
    ASSERT_TRUE(j.contains(mode)) << mode;
    for (const char* key : {"pyramid", "nn", "ae"})
      EXPECT_GE(j[mode]["encode_ms"][key].get<double>(), 0.0) << mode << " " << key;
    EXPECT_GT(j[mode]["bpp"].get<double>(), 0.0);
  }
}

TEST_F(Cli, EvalReportsDistortion)
{
  const CliRun r = run("eval --json --ref " + kScan + " --test " + kScan);
  ASSERT_EQ(r.status, 0);
  const json j = json::parse(r.out);
  EXPECT_EQ(j["d1_psnr_db"].get<double>(), 120.0);
  EXPECT_EQ(j["chamfer"].get<double>(), 0.0);
}

TEST_F(Cli, GenDataAndTrainAreDeterministic)
{
  const std::string cfg = "'{\"seed\":3,\"rings\":4,\"points_per_ring\":64,\"count\":2}'";
  ASSERT_EQ(run("gen-data --config " + cfg + " --out " + path("gen")).status, 0);
  EXPECT_TRUE(fs::exists(path("gen/scan_0000.ply")));
  EXPECT_TRUE(fs::exists(path("gen/scan_0001.ply")));

  const std::string train_cfg =
    "'{\"seed\":3,\"rings\":4,\"points_per_ring\":64,\"count\":2,\"heldout\":1,\"depth\":7}'";
  for (const char* name : {"a.rnnw", "b.rnnw"})
    ASSERT_EQ(run("train --synthetic " + train_cfg + " --steps 3 --channels 4 --seed 1 --out " +
                  path(name))
                .status,
              0);
  EXPECT_EQ(nn::read_file_bytes(path("a.rnnw")), nn::read_file_bytes(path("b.rnnw")));
  ASSERT_EQ(run("train --data " + path("gen") + " --steps 2 --channels 4 --depth 7 --out " +
                path("c.rnnw"))
              .status,
            0);
}

TEST_F(Cli, UsageErrorsExitTwo)
{
  EXPECT_EQ(run("encode --no-such-flag").status, 2);
  EXPECT_EQ(run("frobnicate").status, 2);
  EXPECT_EQ(run("encode --input " + kScan).status, 2);
}

TEST_F(Cli, EmptyInputFailsWithoutOutput)
{
  write_points({}, path("empty.ply"));
  EXPECT_EQ(run("encode --input " + path("empty.ply") + " --output " + path("e.reno") +
                " --model " + kModel)
              .status,
            1);
  EXPECT_FALSE(fs::exists(path("e.reno")));
  EXPECT_EQ(run("decode --input " + path("missing.reno") + " --output " + path("x.ply") +
                " --model " + kModel)
              .status,
            1);
  EXPECT_FALSE(fs::exists(path("x.ply")));
}
