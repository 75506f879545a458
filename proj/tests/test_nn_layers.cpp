// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "reno/error.hpp"
#include "reno/nn/adam.hpp"
#include "reno/nn/layers.hpp"
#include "reno/nn/neighbor_index.hpp"
#include "reno/nn/param_io.hpp"
#include "reno/parallel.hpp"

using namespace reno;
using namespace reno::nn;

namespace {

constexpr double kGradTol = 1e-5;

/// Dense 3x3x3 convolution over a zero-padded grid, evaluated only at the
/// requested coordinates.
Matrix<double> dense_conv_oracle(const std::vector<Coord>& coords, const Matrix<double>& x,
                                 const ParamTensor<double>& w, const ParamTensor<double>& b,
                                 int side)
{
  const std::size_t cin = w.shape[1], cout = w.shape[2];
  std::vector<double> grid(static_cast<std::size_t>(side * side * side) * cin, 0.0);
  auto at = [&](int px, int py, int pz) -> double* {
    return grid.data() + (static_cast<std::size_t>((pz * side + py) * side + px)) * cin;
  };
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (std::size_t c = 0; c < cin; ++c)
      at(static_cast<int>(coords[i].x), static_cast<int>(coords[i].y),
         static_cast<int>(coords[i].z))[c] = x(i, c);
  Matrix<double> out(coords.size(), cout);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (std::size_t o = 0; o < cout; ++o)
      out(i, o) = b.values[o];
    int k = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, ++k) {
          const int px = static_cast<int>(coords[i].x) + dx;
          const int py = static_cast<int>(coords[i].y) + dy;
          const int pz = static_cast<int>(coords[i].z) + dz;
          if (px < 0 || py < 0 || pz < 0 || px >= side || py >= side || pz >= side)
            continue;
          const double* v = at(px, py, pz);
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t o = 0; o < cout; ++o)
              out(i, o) += v[ci] * w.values[(static_cast<std::size_t>(k) * cin + ci) * cout + o];
        }
  }
  return out;
}

}  // namespace

TEST(Embed, ZeroTableAndScatter)
{
  ParamTensor<float> t("t", {5, 3});
  const std::vector<int> idx{4, 0, 4};
  const Matrix<float> out = embed(t, std::span<const int>(idx));
  EXPECT_EQ(out, Matrix<float>(3, 3));

  Matrix<float> d(3, 3);
  d(1, 2) = 1.0f;
  embed_backward(d, std::span<const int>(idx), t);
  for (std::size_t i = 0; i < t.grad.size(); ++i)
    EXPECT_EQ(t.grad[i], i == 2 ? 1.0f : 0.0f);

  const std::vector<int> bad{5};
  EXPECT_THROW(embed(t, std::span<const int>(bad)), Error);
}

TEST(Embed, FloatGradientWithinSinglePrecisionTolerance)
{
  std::mt19937_64 rng(3);
  ParamTensor<float> t("t", {6, 4});
  for (float& v : t.values)
    v = std::normal_distribution<float>(0, 1)(rng);
  const std::vector<int> idx{1, 3, 1, 5};
  Matrix<float> r(4, 4);
  for (float& v : r.data())
    v = std::normal_distribution<float>(0, 1)(rng);
  embed_backward(r, std::span<const int>(idx), t);
  std::vector<double> analytic(t.grad.begin(), t.grad.end()), numeric(t.values.size());
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const float saved = t.values[i];
    auto loss = [&] {
      const auto out = embed(t, std::span<const int>(idx));
      double s = 0;
      for (std::size_t j = 0; j < out.size(); ++j)
        s += static_cast<double>(out.data()[j]) * r.data()[j];
      return s;
    };
    t.values[i] = saved + 1e-2f;
    const double up = loss();
    t.values[i] = saved - 1e-2f;
    const double down = loss();
    t.values[i] = saved;
    numeric[i] = (up - down) / (static_cast<double>(saved + 1e-2f) - (saved - 1e-2f));
  }
  EXPECT_LE(gradcheck::relative_error(analytic, numeric), 1e-3);
}

TEST(SparseConv, IdentityCenterTap)
{
  std::mt19937_64 rng(4);
  const auto coords = gradcheck::micro_coords(rng, 8);
  const NeighborIndex nbr(coords, 3);
  ParamTensor<double> w("w", {27, 4, 4}), b("b", {4});
  for (std::size_t c = 0; c < 4; ++c)
    w.values[(13 * 4 + c) * 4 + c] = 1.0;
  const auto x = gradcheck::random_matrix(8, 4, rng);
  EXPECT_EQ(sparse_conv(x, nbr, w, b), x);
}

TEST(SparseConv, IsolatedVoxelSeesOnlyCenterTap)
{
  const std::vector<Coord> coords{{5, 5, 5}};
  const NeighborIndex nbr(coords, 3);
  ParamTensor<double> w("w", {27, 2, 3}), b("b", {3});
  std::fill(w.values.begin(), w.values.end(), 1.0);
  Matrix<double> x(1, 2);
  x(0, 0) = 2.0;
  x(0, 1) = -0.5;
  const auto out = sparse_conv(x, nbr, w, b);
  for (std::size_t c = 0; c < 3; ++c)
    EXPECT_DOUBLE_EQ(out(0, c), 1.5);
}

TEST(SparseConv, MatchesDenseGridOracle)
{
  std::mt19937_64 rng(5);
  for (int t = 0; t < 40; ++t) {
    std::vector<Coord> coords;
    if (t == 0) {
      coords = {{1, 1, 1}, {2, 1, 1}};
    } else {
      std::uniform_int_distribution<std::uint32_t> axis(0, 7);
      std::set<std::uint64_t> seen;
      const std::size_t n = 1 + rng() % 60;
      while (coords.size() < n) {
        const Coord c{axis(rng), axis(rng), axis(rng)};
        if (seen.insert(morton_encode(c)).second)
          coords.push_back(c);
      }
    }
    const std::size_t cin = 1 + rng() % 5, cout = 1 + rng() % 40;
    const NeighborIndex nbr(coords, 3);
    auto w = gradcheck::random_param("w", {27, cin, cout}, rng);
    auto b = gradcheck::random_param("b", {cout}, rng);
    const auto x = gradcheck::random_matrix(coords.size(), cin, rng);
    const auto got = sparse_conv(x, nbr, w, b);
    const auto want = dense_conv_oracle(coords, x, w, b, 8);
    for (std::size_t i = 0; i < got.size(); ++i)
      ASSERT_NEAR(got.data()[i], want.data()[i], 1e-12);
  }
}

TEST(SparseConv, DeterministicAcrossThreadCounts)
{
  std::mt19937_64 rng(6);
  std::vector<Coord> coords;
  for (std::uint32_t i = 0; i < 3000; ++i)
    coords.push_back({i % 17, (i / 17) % 17, i / 289});
  const NeighborIndex nbr(coords, 3);
  ParamTensor<float> w("w", {27, 32, 32}), b("b", {32});
  for (float& v : w.values)
    v = std::normal_distribution<float>(0, 0.1f)(rng);
  Matrix<float> x(coords.size(), 32);
  for (float& v : x.data())
    v = std::max(0.0f, std::normal_distribution<float>(0, 1)(rng));
  set_worker_threads(1);
  const auto one = sparse_conv(x, nbr, w, b);
  set_worker_threads(4);
  const auto four = sparse_conv(x, nbr, w, b);
  set_worker_threads(0);
  EXPECT_EQ(one, four);
}

TEST(NeighborIndex, OffsetsAreLexicographicAndMirrored)
{
  const std::vector<Coord> coords{{1, 1, 1}, {2, 1, 1}, {1, 2, 1}, {1, 1, 2}};
  const NeighborIndex nbr(coords, 3);
  // dx = +1 is offset 14 from the center; seen from (2,1,1) it is offset 12.
  EXPECT_EQ(nbr.row(0)[13], 0);
  EXPECT_EQ(nbr.row(0)[14], 1);
  EXPECT_EQ(nbr.row(0)[16], 2);
  EXPECT_EQ(nbr.row(0)[22], 3);
  EXPECT_EQ(nbr.row(1)[12], 0);
  EXPECT_EQ(nbr.row(1)[14], -1);
}

TEST(Pointwise, ReluAndSoftmax)
{
  Matrix<double> x(1, 4);
  x(0, 0) = -2;
  x(0, 1) = 0;
  x(0, 2) = 3;
  x(0, 3) = -0.5;
  const auto y = relu(x);
  EXPECT_EQ(y(0, 0), 0);
  EXPECT_EQ(y(0, 2), 3);
  EXPECT_EQ(y(0, 3), 0);

  const auto p = softmax(Matrix<float>(3, 16));
  for (float v : p.data())
    EXPECT_FLOAT_EQ(v, 1.0f / 16);

  std::mt19937_64 rng(7);
  Matrix<float> logits(50, 255);
  for (float& v : logits.data())
    v = std::normal_distribution<float>(0, 30)(rng);
  const auto q = softmax(logits);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double s = 0;
    for (std::size_t c = 0; c < q.cols(); ++c)
      s += q(i, c);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(CrossEntropy, Examples)
{
  const std::vector<int> t{3, 0};
  EXPECT_DOUBLE_EQ(cross_entropy_bits(Matrix<double>(2, 16, 1.0 / 16), t), 8.0);
  Matrix<double> onehot(1, 4);
  onehot(0, 2) = 1.0;
  const std::vector<int> t2{2};
  EXPECT_DOUBLE_EQ(cross_entropy_bits(onehot, t2), 0.0);

  std::size_t clamped = 0;
  const std::vector<int> t3{1};
  EXPECT_DOUBLE_EQ(cross_entropy_bits(onehot, t3, &clamped), -std::log2(kProbabilityFloor));
  EXPECT_EQ(clamped, 1u);
}

TEST(CrossEntropy, MatchesScalarComputation)
{
  std::mt19937_64 rng(8);
  const auto logits = gradcheck::random_matrix(20, 9, rng);
  std::vector<int> t(20);
  for (int& v : t)
    v = static_cast<int>(rng() % 9);
  double want = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    double z = 0;
    for (std::size_t c = 0; c < 9; ++c)
      z += std::exp(logits(i, c));
    want += -(logits(i, static_cast<std::size_t>(t[i])) - std::log(z)) / std::log(2.0);
  }
  EXPECT_NEAR(cross_entropy_bits(softmax(logits), t), want, 1e-10);
}

TEST(GradientCheck, EveryLayerDoublePrecision)
{
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    EXPECT_LE(gradcheck::check_embed(seed).max_rel_error, kGradTol) << seed;
    EXPECT_LE(gradcheck::check_sparse_conv(seed).max_rel_error, kGradTol) << seed;
    EXPECT_LE(gradcheck::check_linear(seed).max_rel_error, kGradTol) << seed;
    EXPECT_LE(gradcheck::check_relu(seed).max_rel_error, kGradTol) << seed;
    EXPECT_LE(gradcheck::check_softmax_cross_entropy(seed).max_rel_error, kGradTol) << seed;
  }
}

TEST(GradientCheck, SoftmaxCrossEntropyIsPMinusOnehot)
{
  Matrix<double> p(1, 4);
  p(0, 0) = 0.1;
  p(0, 1) = 0.2;
  p(0, 2) = 0.3;
  p(0, 3) = 0.4;
  const std::vector<int> t{2};
  const auto d = softmax_cross_entropy_grad(p, std::span<const int>(t), std::log(2.0));
  EXPECT_NEAR(d(0, 0), 0.1, 1e-15);
  EXPECT_NEAR(d(0, 2), -0.7, 1e-15);
  EXPECT_NEAR(d(0, 3), 0.4, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged)
{
  ParamTensor<double> p("p", {3});
  p.values = {1.0, -2.0, 0.5};
  Adam<double> opt({&p});
  EXPECT_TRUE(opt.step());
  EXPECT_EQ(p.values, (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, ScalarReference)
{
  ParamTensor<double> p("p", {1});
  p.values = {0.3};
  Adam<double> opt({&p});
  double m = 0, v = 0, theta = 0.3;
  for (int t = 1; t <= 3; ++t) {
    p.grad = {1.0};
    opt.step();
    m = 0.9 * m + 0.1 * 1.0;
    v = 0.999 * v + 0.001 * 1.0;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    theta -= 5e-4 * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_DOUBLE_EQ(p.values[0], theta);
  }
  // First step moves by lr / (1 + eps) exactly.
  EXPECT_NEAR(0.3 - 5e-4 * 3, theta, 1e-10);
}

TEST(Adam, NonFiniteGradientSkipsStep)
{
  ParamTensor<double> a("a", {2}), b("b", {1});
  a.values = {1, 2};
  Adam<double> opt({&a, &b});
  a.grad = {0.5, 0.5};
  b.grad = {NAN};
  EXPECT_FALSE(opt.step());
  EXPECT_EQ(a.values, (std::vector<double>{1, 2}));
  EXPECT_EQ(opt.skipped(), 1);
  EXPECT_EQ(opt.steps(), 0);
}

TEST(Adam, IdenticalInputsGiveIdenticalUpdates)
{
  ParamTensor<float> a("a", {4}), b("b", {4});
  a.values = b.values = {0.1f, 0.2f, -0.3f, 4.0f};
  Adam<float> oa({&a}), ob({&b});
  for (int i = 0; i < 10; ++i) {
    a.grad = b.grad = {0.01f * i, -1.0f, 3.0f, 0.0f};
    oa.step();
    ob.step();
  }
  EXPECT_EQ(a.values, b.values);
}

TEST(ParamIo, RoundTripAndValidation)
{
  std::vector<StoredTensor> tensors{{"a", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"bias", {1}, {-0.5f}}};
  const auto bytes = serialize_params(tensors);
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RNNW");
  const auto back = deserialize_params(bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "a");
  EXPECT_EQ(back[0].shape, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(back[1].values, (std::vector<float>{-0.5f}));

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(deserialize_params(truncated), Error);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_params(trailing), Error);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_params(magic), Error);
}
