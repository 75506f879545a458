// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "reno/error.hpp"
#include "reno/nn/neighbor_index.hpp"
#include "reno/nn/tensor.hpp"
#include "reno/parallel.hpp"

// Forward and reverse passes of the primitives the context model is built
// from. Every forward accumulates each output row in a fixed order (kernel
// offset, then input channel), so results do not depend on threading.

namespace reno::nn {

// ---------------------------------------------------------------------------
// Embedding

template <typename T>
Matrix<T> embed(const ParamTensor<T>& table, std::span<const int> indices)
{
  const std::size_t vocab = table.shape.at(0);
  const std::size_t cols = table.shape.at(1);
  Matrix<T> out(indices.size(), cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= vocab)
      throw Error(ErrorKind::IndexError, "embedding index " + std::to_string(idx) +
                                           " outside table of " + std::to_string(vocab));
    std::copy_n(table.values.data() + static_cast<std::size_t>(idx) * cols, cols, out.row(i));
  }
  return out;
}

template <typename T>
void embed_backward(const Matrix<T>& d_out, std::span<const int> indices, ParamTensor<T>& table)
{
  const std::size_t cols = table.shape.at(1);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    T* g = table.grad.data() + static_cast<std::size_t>(indices[i]) * cols;
    const T* d = d_out.row(i);
    for (std::size_t c = 0; c < cols; ++c)
      g[c] += d[c];
  }
}

namespace detail {

/// 32-byte lane group; element-wise vector arithmetic rounds exactly like
/// the scalar loop it replaces.
template <typename T>
struct Lanes {
  static constexpr std::size_t kCount = 32 / sizeof(T);
  typedef T Vec __attribute__((vector_size(32)));

  static Vec load(const T* p)
  {
    Vec v;
    std::memcpy(&v, p, sizeof(v));
    return v;
  }
  static void store(T* p, const Vec& v) { std::memcpy(p, &v, sizeof(v)); }
  static Vec splat(T a) { return Vec{} + a; }
};

template <typename T>
struct Term {
  T a;
  const T* w;
};

/// Collects the nonzero terms of a row without data-dependent branches.
template <typename T>
class TermBuffer {
public:
  void reset(std::size_t capacity)
  {
    if (buf_.size() < capacity)
      buf_.resize(capacity);
    size_ = 0;
  }
  void add(T a, const T* w)
  {
    buf_[size_] = {a, w};
    size_ += static_cast<std::size_t>(a != T(0));
  }
  std::span<const Term<T>> terms() const { return {buf_.data(), size_}; }

private:
  std::vector<Term<T>> buf_;
  std::size_t size_ = 0;
};

/// out[c] = init[c] + sum over terms t, in order, of a_t * w_t[c] for c in
/// [0, n). A null `init` starts from zero.
template <typename T>
inline void accumulate_row(T* out, const T* init, std::size_t n, std::span<const Term<T>> terms)
{
  using L = Lanes<T>;
  using V = typename L::Vec;
  constexpr std::size_t kL = L::kCount;
  std::size_t cb = 0;
  for (; cb + 4 * kL <= n; cb += 4 * kL) {
    V a0 = init ? L::load(init + cb) : V{};
    V a1 = init ? L::load(init + cb + kL) : V{};
    V a2 = init ? L::load(init + cb + 2 * kL) : V{};
    V a3 = init ? L::load(init + cb + 3 * kL) : V{};
    for (const Term<T>& t : terms) {
      const V s = L::splat(t.a);
      a0 += s * L::load(t.w + cb);
      a1 += s * L::load(t.w + cb + kL);
      a2 += s * L::load(t.w + cb + 2 * kL);
      a3 += s * L::load(t.w + cb + 3 * kL);
    }
    L::store(out + cb, a0);
    L::store(out + cb + kL, a1);
    L::store(out + cb + 2 * kL, a2);
    L::store(out + cb + 3 * kL, a3);
  }
  for (; cb + kL <= n; cb += kL) {
    V a0 = init ? L::load(init + cb) : V{};
    for (const Term<T>& t : terms)
      a0 += L::splat(t.a) * L::load(t.w + cb);
    L::store(out + cb, a0);
  }
  for (; cb < n; ++cb) {
    T acc = init ? init[cb] : T(0);
    for (const Term<T>& t : terms)
      acc += t.a * t.w[cb];
    out[cb] = acc;
  }
}

/// g[ci][c] += sum over pairs p, in order, of x_p[ci] * d_p[c]; g is
/// rows x n. Pairs are processed in tiles so a tile of d stays cached.
template <typename T>
inline void accumulate_outer(T* g, std::size_t rows, std::size_t n,
                             std::span<const std::pair<const T*, const T*>> pairs)
{
  constexpr std::size_t kTile = 128;
  TermBuffer<T> buf;
  for (std::size_t t0 = 0; t0 < pairs.size(); t0 += kTile) {
    const auto tile = pairs.subspan(t0, std::min(kTile, pairs.size() - t0));
    for (std::size_t ci = 0; ci < rows; ++ci) {
      buf.reset(tile.size());
      for (const auto& [x, d] : tile)
        buf.add(x[ci], d);
      T* gr = g + ci * n;
      accumulate_row<T>(gr, gr, n, buf.terms());
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sparse convolution, weights laid out [offset][c_in][c_out]

template <typename T>
Matrix<T> sparse_conv(const Matrix<T>& in, const NeighborIndex& nbr, const ParamTensor<T>& weight,
                      const ParamTensor<T>& bias)
{
  const std::size_t volume = static_cast<std::size_t>(nbr.volume());
  const std::size_t cin = weight.shape.at(1);
  const std::size_t cout = weight.shape.at(2);
  if (weight.shape.at(0) != volume || in.cols() != cin || in.rows() != nbr.rows() ||
      bias.values.size() != cout)
    throw Error(ErrorKind::InvalidInput, "sparse_conv shape mismatch");

  Matrix<T> out(in.rows(), cout);
  const T* w = weight.values.data();
  parallel_for(in.rows(), [&](std::size_t begin, std::size_t end) {
    detail::TermBuffer<T> buf;
    for (std::size_t i = begin; i < end; ++i) {
      const std::int32_t* n = nbr.row(i);
      buf.reset(volume * cin);
      for (std::size_t k = 0; k < volume; ++k) {
        if (n[k] < 0)
          continue;
        const T* x = in.row(static_cast<std::size_t>(n[k]));
        const T* wk = w + k * cin * cout;
        for (std::size_t ci = 0; ci < cin; ++ci)
          buf.add(x[ci], wk + ci * cout);
      }
      detail::accumulate_row<T>(out.row(i), bias.values.data(), cout, buf.terms());
    }
  });
  return out;
}

/// Accumulates weight/bias gradients; writes the input gradient when
/// `d_in` is non-null.
template <typename T>
void sparse_conv_backward(const Matrix<T>& in, const NeighborIndex& nbr, ParamTensor<T>& weight,
                          ParamTensor<T>& bias, const Matrix<T>& d_out, Matrix<T>* d_in)
{
  const std::size_t volume = static_cast<std::size_t>(nbr.volume());
  const std::size_t cin = weight.shape.at(1);
  const std::size_t cout = weight.shape.at(2);
  const std::size_t rows = in.rows();

  for (std::size_t i = 0; i < rows; ++i) {
    const T* d = d_out.row(i);
    for (std::size_t c = 0; c < cout; ++c)
      bias.grad[c] += d[c];
  }

  // dW[k] = sum_i x[nbr(i,k)]^T d_out[i]; split by offset so each worker
  // owns a disjoint slice of the gradient.
  parallel_for(
    volume,
    [&](std::size_t kbegin, std::size_t kend) {
      std::vector<std::pair<const T*, const T*>> pairs;
      for (std::size_t k = kbegin; k < kend; ++k) {
        pairs.clear();
        for (std::size_t i = 0; i < rows; ++i) {
          const std::int32_t j = nbr.row(i)[k];
          if (j >= 0)
            pairs.emplace_back(in.row(static_cast<std::size_t>(j)), d_out.row(i));
        }
        detail::accumulate_outer<T>(weight.grad.data() + k * cin * cout, cin, cout, pairs);
      }
    },
    1);

  if (d_in == nullptr)
    return;

  // d_in[j] = sum_k W[k] d_out[i] over rows i with nbr(i,k) == j, i.e. the
  // mirrored offset seen from j. Gathering keeps rows independent.
  std::vector<T> wt(weight.values.size());
  for (std::size_t k = 0; k < volume; ++k)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t c = 0; c < cout; ++c)
        wt[(k * cout + c) * cin + ci] = weight.values[(k * cin + ci) * cout + c];

  *d_in = Matrix<T>(rows, cin);
  parallel_for(rows, [&](std::size_t begin, std::size_t end) {
    detail::TermBuffer<T> buf;
    for (std::size_t j = begin; j < end; ++j) {
      const std::int32_t* n = nbr.row(j);
      buf.reset(volume * cout);
      for (std::size_t k = 0; k < volume; ++k) {
        const std::int32_t i = n[volume - 1 - k];
        if (i < 0)
          continue;
        const T* d = d_out.row(static_cast<std::size_t>(i));
        const T* wk = wt.data() + k * cout * cin;
        for (std::size_t c = 0; c < cout; ++c)
          buf.add(d[c], wk + c * cin);
      }
      detail::accumulate_row<T>(d_in->row(j), nullptr, cin, buf.terms());
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise layers, linear weights laid out [c_in][c_out]

template <typename T>
Matrix<T> linear(const Matrix<T>& in, const ParamTensor<T>& weight, const ParamTensor<T>& bias)
{
  const std::size_t cin = weight.shape.at(0);
  const std::size_t cout = weight.shape.at(1);
  if (in.cols() != cin || bias.values.size() != cout)
    throw Error(ErrorKind::InvalidInput, "linear shape mismatch");
  Matrix<T> out(in.rows(), cout);
  const T* w = weight.values.data();
  parallel_for(in.rows(), [&](std::size_t begin, std::size_t end) {
    detail::TermBuffer<T> buf;
    for (std::size_t i = begin; i < end; ++i) {
      const T* x = in.row(i);
      buf.reset(cin);
      for (std::size_t ci = 0; ci < cin; ++ci)
        buf.add(x[ci], w + ci * cout);
      detail::accumulate_row<T>(out.row(i), bias.values.data(), cout, buf.terms());
    }
  });
  return out;
}

template <typename T>
void linear_backward(const Matrix<T>& in, ParamTensor<T>& weight, ParamTensor<T>& bias,
                     const Matrix<T>& d_out, Matrix<T>* d_in)
{
  const std::size_t cin = weight.shape.at(0);
  const std::size_t cout = weight.shape.at(1);
  std::vector<std::pair<const T*, const T*>> pairs;
  pairs.reserve(in.rows());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    const T* d = d_out.row(i);
    for (std::size_t c = 0; c < cout; ++c)
      bias.grad[c] += d[c];
    pairs.emplace_back(in.row(i), d);
  }
  detail::accumulate_outer<T>(weight.grad.data(), cin, cout, pairs);
  if (d_in == nullptr)
    return;
  std::vector<T> wt(weight.values.size());  // [c_out][c_in]
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t c = 0; c < cout; ++c)
      wt[c * cin + ci] = weight.values[ci * cout + c];
  *d_in = Matrix<T>(in.rows(), cin);
  parallel_for(in.rows(), [&](std::size_t begin, std::size_t end) {
    detail::TermBuffer<T> buf;
    for (std::size_t i = begin; i < end; ++i) {
      const T* d = d_out.row(i);
      buf.reset(cout);
      for (std::size_t c = 0; c < cout; ++c)
        buf.add(d[c], wt.data() + c * cin);
      detail::accumulate_row<T>(d_in->row(i), nullptr, cin, buf.terms());
    }
  });
}

template <typename T>
Matrix<T> relu(const Matrix<T>& in)
{
  Matrix<T> out = in;
  for (T& v : out.data())
    v = v > T(0) ? v : T(0);
  return out;
}

/// Gradient through relu given the relu's output.
template <typename T>
Matrix<T> relu_backward(const Matrix<T>& out, const Matrix<T>& d_out)
{
  Matrix<T> d_in = d_out;
  auto& g = d_in.data();
  const auto& y = out.data();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(y[i] > T(0)))
      g[i] = T(0);
  return d_in;
}

template <typename T>
void add_inplace(Matrix<T>& acc, const Matrix<T>& other)
{
  if (acc.rows() != other.rows() || acc.cols() != other.cols())
    throw Error(ErrorKind::InvalidInput, "add shape mismatch");
  auto& a = acc.data();
  const auto& b = other.data();
  for (std::size_t i = 0; i < a.size(); ++i)
    a[i] += b[i];
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy (in bits)

template <typename T>
void softmax_row(const T* logits, T* probs, std::size_t k)
{
  T peak = logits[0];
  for (std::size_t c = 1; c < k; ++c)
    peak = std::max(peak, logits[c]);
  T sum = T(0);
  for (std::size_t c = 0; c < k; ++c) {
    probs[c] = std::exp(logits[c] - peak);
    sum += probs[c];
  }
  const T inv = T(1) / sum;
  for (std::size_t c = 0; c < k; ++c)
    probs[c] *= inv;
}

template <typename T>
Matrix<T> softmax(const Matrix<T>& logits)
{
  Matrix<T> probs(logits.rows(), logits.cols());
  parallel_for(logits.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      softmax_row(logits.row(i), probs.row(i), logits.cols());
  });
  return probs;
}

inline constexpr double kProbabilityFloor = 1e-9;

/// Sum over rows of -log2 p[target]; probabilities below the floor are
/// clamped and counted in `clamped`.
template <typename T>
double cross_entropy_bits(const Matrix<T>& probs, std::span<const int> targets,
                          std::size_t* clamped = nullptr)
{
  double bits = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= probs.cols())
      throw Error(ErrorKind::IndexError, "target class out of range");
    double p = static_cast<double>(probs(i, static_cast<std::size_t>(t)));
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      if (clamped != nullptr)
        ++*clamped;
    }
    bits -= std::log2(p);
  }
  return bits;
}

/// d(scale * bits)/d(logits) = scale * (p - onehot) / ln 2.
template <typename T>
Matrix<T> softmax_cross_entropy_grad(const Matrix<T>& probs, std::span<const int> targets,
                                     T scale)
{
  Matrix<T> d = probs;
  const T factor = scale / static_cast<T>(std::numbers::ln2);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    T* r = d.row(i);
    r[static_cast<std::size_t>(targets[i])] -= T(1);
    for (std::size_t c = 0; c < d.cols(); ++c)
      r[c] *= factor;
  }
  return d;
}

}  // namespace reno::nn
