#pragma once

// Brute-force reference implementations. They share no code with the kernels:
// index math is written out per element and sums accumulate in double.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "enet/tensor.hpp"

namespace oracle {

using enet::NdArray;
using enet::Shape;
using enet::Tensor;

inline long sz(std::size_t v) { return static_cast<long>(v); }

// out[o,y,x] = b[o] + sum w[o,c,i,j] * in[c, y*s - ph + i*d, x*s - pw + j*d]
inline Tensor conv(const Tensor& in, const NdArray& w, const std::vector<float>& bias, std::size_t stride,
                   std::size_t pad_h, std::size_t pad_w, std::size_t dil) {
  const long C = sz(in.shape().channels), H = sz(in.shape().height), W = sz(in.shape().width);
  const long O = sz(w.dim(0)), KH = sz(w.dim(2)), KW = sz(w.dim(3));
  const long s = sz(stride), d = sz(dil);
  const long OH = (H + 2 * sz(pad_h) - d * (KH - 1) - 1) / s + 1;
  const long OW = (W + 2 * sz(pad_w) - d * (KW - 1) - 1) / s + 1;
  Tensor out({w.dim(0), static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
  for (long o = 0; o < O; ++o)
    for (long y = 0; y < OH; ++y)
      for (long x = 0; x < OW; ++x) {
        double acc = 0.0;
        for (long c = 0; c < C; ++c)
          for (long i = 0; i < KH; ++i)
            for (long j = 0; j < KW; ++j) {
              const long iy = y * s - sz(pad_h) + i * d;
              const long ix = x * s - sz(pad_w) + j * d;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += double(w.at(o, c, i, j)) * double(in.at(c, iy, ix));
            }
        if (!bias.empty()) acc += bias[o];
        out.at(o, y, x) = static_cast<float>(acc);
      }
  return out;
}

// Gather form of the transposed convolution: each output pixel collects the
// input pixels whose stride-s scatter lands on it.
inline Tensor conv_transpose(const Tensor& in, const NdArray& w, const std::vector<float>& bias, std::size_t stride,
                             std::size_t pad, std::size_t output_padding = 0) {
  const long C = sz(in.shape().channels), H = sz(in.shape().height), W = sz(in.shape().width);
  const long O = sz(w.dim(1)), KH = sz(w.dim(2)), KW = sz(w.dim(3));
  const long s = sz(stride), p = sz(pad);
  const long OH = (H - 1) * s - 2 * p + KH + sz(output_padding);
  const long OW = (W - 1) * s - 2 * p + KW + sz(output_padding);
  Tensor out({static_cast<std::size_t>(O), static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
  for (long o = 0; o < O; ++o)
    for (long Y = 0; Y < OH; ++Y)
      for (long X = 0; X < OW; ++X) {
        double acc = 0.0;
        for (long c = 0; c < C; ++c)
          for (long i = 0; i < KH; ++i)
            for (long j = 0; j < KW; ++j) {
              const long ny = Y + p - i, nx = X + p - j;
              if (ny < 0 || nx < 0 || ny % s || nx % s) continue;
              const long y = ny / s, x = nx / s;
              if (y >= H || x >= W) continue;
              acc += double(w.at(c, o, i, j)) * double(in.at(c, y, x));
            }
        if (!bias.empty()) acc += bias[o];
        out.at(o, Y, X) = static_cast<float>(acc);
      }
  return out;
}

struct Pool {
  Tensor values;
  std::vector<std::int32_t> indices;  // flat over (c, y, x) of the pooled map
};

inline Pool window_max(const Tensor& in) {
  const auto& s = in.shape();
  Pool r{Tensor({s.channels, s.height / 2, s.width / 2}), {}};
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t y = 0; y < s.height / 2; ++y)
      for (std::size_t x = 0; x < s.width / 2; ++x) {
        float best = -INFINITY;
        std::int32_t at = -1;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t yy = 2 * y + dy, xx = 2 * x + dx;
            const auto flat = static_cast<std::int32_t>(yy * s.width + xx);
            const float v = in.at(c, yy, xx);
            if (at < 0 || v > best || (v == best && flat < at)) {
              best = v;
              at = flat;
            }
          }
        r.values.at(c, y, x) = best;
        r.indices.push_back(at);
      }
  return r;
}

inline float batchnorm(float x, float gamma, float beta, float mean, float var, float eps) {
  return static_cast<float>(double(gamma) * (double(x) - mean) / std::sqrt(double(var) + eps) + beta);
}

inline float prelu(float x, float slope) { return x < 0.0f ? slope * x : x; }

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

// ---------------------------------------------------------------------------
// Random instances

struct Rng {
  std::mt19937 gen;
  explicit Rng(unsigned seed) : gen(seed) {}

  std::size_t range(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(gen); }
  float uniform(float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(gen); }
  // k/16 for k in [-16, 16]: products and short sums stay exact in float
  float dyadic() { return static_cast<float>(std::uniform_int_distribution<int>(-16, 16)(gen)) / 16.0f; }

  Tensor tensor(const Shape& s, bool exact = true) {
    Tensor t(s);
    for (float& v : t.data()) v = exact ? dyadic() : uniform(-1.0f, 1.0f);
    return t;
  }
  NdArray array(std::vector<std::size_t> dims, bool exact = true) {
    NdArray a(std::move(dims));
    for (float& v : a.data()) v = exact ? dyadic() : uniform(-1.0f, 1.0f);
    return a;
  }
  std::vector<float> vec(std::size_t n, bool exact = true) {
    std::vector<float> v(n);
    for (float& x : v) x = exact ? dyadic() : uniform(-1.0f, 1.0f);
    return v;
  }
};

}  // namespace oracle
