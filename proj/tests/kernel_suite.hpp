#pragma once

// Randomized kernel-vs-oracle sweeps shared by the unit tests and the
// acceptance harness. Each sweep reports its worst error.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "enet/kernels.hpp"
#include "oracle.hpp"

namespace suite {

using namespace enet;

struct Sweep {
  std::string name;
  std::size_t instances = 0;
  double worst = 0.0;  // absolute unless the sweep says otherwise
  double tolerance = 0.0;

  bool ok() const { return instances > 0 && worst <= tolerance; }
  void track(double err) {
    ++instances;
    worst = std::max(worst, std::isnan(err) ? INFINITY : err);
  }
};

inline double max_abs(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  return max_abs_diff(a, b);
}

/// Forward convolution, mixing strides 1/2 and dilations 1/2/4/8/16.
inline Sweep conv2d_sweep(std::size_t n, unsigned seed) {
  static const std::size_t dilations[] = {1, 2, 4, 8, 16};
  oracle::Rng rng(seed);
  Sweep s{"conv2d", 0, 0.0, 1e-6};
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t d = dilations[t % 5];
    const Shape in{rng.range(1, 4), rng.range(1, 8), rng.range(1, 8)};
    ConvParams p;
    p.kernel_h = rng.range(1, 3);
    p.kernel_w = rng.range(1, 3);
    p.dilation = d;
    p.stride = d == 1 ? rng.range(1, 2) : 1;
    p.out_channels = rng.range(1, 4);
    p.has_bias = rng.range(0, 1) == 1;
    // keep the padded extent large enough for one output
    const std::size_t min_ph = (d * (p.kernel_h - 1) + 1 > in.height) ? (d * (p.kernel_h - 1) + 2 - in.height) / 2 : 0;
    const std::size_t min_pw = (d * (p.kernel_w - 1) + 1 > in.width) ? (d * (p.kernel_w - 1) + 2 - in.width) / 2 : 0;
    p.pad_h = min_ph + rng.range(0, d);
    p.pad_w = min_pw + rng.range(0, d);
    const Tensor x = rng.tensor(in);
    const NdArray w = rng.array({p.out_channels, in.channels, p.kernel_h, p.kernel_w});
    const std::vector<float> b = p.has_bias ? rng.vec(p.out_channels) : std::vector<float>{};
    s.track(max_abs(conv2d(x, w, b, p), oracle::conv(x, w, b, p.stride, p.pad_h, p.pad_w, d)));
  }
  return s;
}

inline Sweep conv_transpose_sweep(std::size_t n, unsigned seed) {
  oracle::Rng rng(seed);
  Sweep s{"conv_transpose2d", 0, 0.0, 1e-6};
  while (s.instances < n) {
    const Shape in{rng.range(1, 4), rng.range(1, 6), rng.range(1, 6)};
    const std::size_t k = rng.range(1, 4);
    const std::size_t stride = rng.range(1, 3);
    const std::size_t pad = rng.range(0, k - 1);
    const std::size_t op = rng.range(0, stride - 1);
    const std::size_t oc = rng.range(1, 4);
    if ((std::min(in.height, in.width) - 1) * stride + k + op <= 2 * pad) continue;
    const Tensor x = rng.tensor(in);
    const NdArray w = rng.array({in.channels, oc, k, k});
    const std::vector<float> b = rng.range(0, 1) ? rng.vec(oc) : std::vector<float>{};
    s.track(max_abs(conv_transpose2d(x, w, b, stride, pad, op), oracle::conv_transpose(x, w, b, stride, pad, op)));
  }
  return s;
}

/// conv_asymmetric5 against two oracle convolutions, and (single channel)
/// against the direct 5x5 convolution with the outer-product kernel u v^T.
inline Sweep asymmetric_sweep(std::size_t n, unsigned seed) {
  oracle::Rng rng(seed);
  Sweep s{"conv_asymmetric5", 0, 0.0, 1e-6};
  for (std::size_t t = 0; t < n; ++t) {
    if (t % 2 == 0) {
      const Shape in{rng.range(1, 4), rng.range(1, 8), rng.range(1, 8)};
      const std::size_t oc = rng.range(1, 4);
      const Tensor x = rng.tensor(in);
      const NdArray a = rng.array({oc, in.channels, 5, 1});
      const NdArray b = rng.array({oc, oc, 1, 5});
      const Tensor mid = oracle::conv(x, a, {}, 1, 2, 0, 1);
      s.track(max_abs(conv_asymmetric5(x, a, b), oracle::conv(mid, b, {}, 1, 0, 2, 1)));
    } else {
      const Shape in{1, rng.range(1, 8), rng.range(1, 8)};
      const Tensor x = rng.tensor(in);
      const NdArray u = rng.array({1, 1, 5, 1});
      const NdArray v = rng.array({1, 1, 1, 5});
      NdArray uv({1, 1, 5, 5});
      for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) uv.at(0, 0, i, j) = u.at(0, 0, i, 0) * v.at(0, 0, 0, j);
      }
      s.track(max_abs(conv_asymmetric5(x, u, v), oracle::conv(x, uv, {}, 1, 2, 2, 1)));
    }
  }
  return s;
}

/// Pool values/indices against a window scan; unpool against a hand scatter.
/// Inputs are coarse (k/16) so ties are frequent.
inline Sweep pool_sweep(std::size_t n, unsigned seed) {
  oracle::Rng rng(seed);
  Sweep s{"maxpool2x2/max_unpool2x2", 0, 0.0, 0.0};
  for (std::size_t t = 0; t < n; ++t) {
    const Shape in{rng.range(1, 4), 2 * rng.range(1, 4), 2 * rng.range(1, 4)};
    const Tensor x = rng.tensor(in);
    const auto got = maxpool2x2(x);
    const auto want = oracle::window_max(x);
    double err = max_abs(got.values, want.values);
    for (std::size_t k = 0; k < want.indices.size(); ++k) {
      if (got.indices[k] != want.indices[k]) err = INFINITY;
    }
    Tensor scatter(in, 0.0f);
    const std::size_t ph = in.height / 2, pw = in.width / 2;
    for (std::size_t c = 0; c < in.channels; ++c) {
      for (std::size_t k = 0; k < ph * pw; ++k) {
        const auto at = static_cast<std::size_t>(want.indices[c * ph * pw + k]);
        scatter.at(c, at / in.width, at % in.width) = want.values[c * ph * pw + k];
      }
    }
    err = std::max(err, max_abs(max_unpool2x2(got.values, got.indices, in.height, in.width), scatter));
    s.track(err);
  }
  return s;
}

inline Sweep batchnorm_sweep(std::size_t n, unsigned seed) {
  oracle::Rng rng(seed);
  Sweep s{"batchnorm_infer", 0, 0.0, 1e-6};
  for (std::size_t t = 0; t < n; ++t) {
    const Shape in{rng.range(1, 4), rng.range(1, 8), rng.range(1, 8)};
    const Tensor x = rng.tensor(in, false);
    BnParams p;
    for (std::size_t c = 0; c < in.channels; ++c) {
      p.gamma.push_back(rng.uniform(-1.0f, 1.0f));
      p.beta.push_back(rng.uniform(-0.5f, 0.5f));
      p.running_mean.push_back(rng.uniform(-0.5f, 0.5f));
      p.running_var.push_back(rng.uniform(0.5f, 2.0f));
    }
    p.epsilon = rng.uniform(1e-6f, 1e-3f);
    const Tensor y = batchnorm_infer(x, p);
    double err = 0.0;
    for (std::size_t c = 0; c < in.channels; ++c) {
      for (std::size_t k = 0; k < in.plane(); ++k) {
        const float want = oracle::batchnorm(x.plane(c)[k], p.gamma[c], p.beta[c], p.running_mean[c],
                                             p.running_var[c], p.epsilon);
        err = std::max(err, double(std::fabs(y.plane(c)[k] - want)));
      }
    }
    s.track(err);
  }
  return s;
}

inline Sweep prelu_sweep(std::size_t n, unsigned seed) {
  oracle::Rng rng(seed);
  Sweep s{"prelu", 0, 0.0, 1e-6};
  for (std::size_t t = 0; t < n; ++t) {
    const Shape in{rng.range(1, 4), rng.range(1, 8), rng.range(1, 8)};
    const Tensor x = rng.tensor(in, false);
    const std::vector<float> a = rng.vec(in.channels, false);
    const Tensor y = prelu(x, a);
    double err = 0.0;
    for (std::size_t c = 0; c < in.channels; ++c) {
      for (std::size_t k = 0; k < in.plane(); ++k) {
        err = std::max(err, double(std::fabs(y.plane(c)[k] - oracle::prelu(x.plane(c)[k], a[c]))));
      }
    }
    s.track(err);
  }
  return s;
}

/// <conv2d(x; W, s, p), y> against <x, conv_transpose2d(y; W, s, p)>.
/// The error is relative to sum |Kx_i y_i| so a dot product that happens to
/// cancel near zero does not inflate it. Continuous values, so rounding is real.
inline Sweep adjoint_sweep(std::size_t n, unsigned seed) {
  oracle::Rng rng(seed);
  Sweep s{"adjoint <Kx,y> = <x,K'y>", 0, 0.0, 1e-5};
  while (s.instances < n) {
    const Shape in{rng.range(1, 4), rng.range(2, 8), rng.range(2, 8)};
    ConvParams p;
    p.kernel_h = p.kernel_w = rng.range(1, 4);
    p.stride = rng.range(1, 3);
    p.pad_h = p.pad_w = rng.range(0, p.kernel_h - 1);
    p.out_channels = rng.range(1, 4);
    if (in.height + 2 * p.pad_h < p.kernel_h || in.width + 2 * p.pad_w < p.kernel_w) continue;
    const Shape os = conv2d_output_shape(in, p);
    // output_padding recovers the rows/columns the forward stride skipped
    const std::size_t rh = (in.height + 2 * p.pad_h - p.kernel_h) % p.stride;
    const std::size_t rw = (in.width + 2 * p.pad_w - p.kernel_w) % p.stride;
    if (rh != rw) continue;
    const Tensor x = rng.tensor(in, false);
    const Tensor y = rng.tensor(os, false);
    const NdArray wf = rng.array({p.out_channels, in.channels, p.kernel_h, p.kernel_w}, false);
    const Tensor kx = conv2d(x, wf, {}, p);
    // [O, C, kh, kw] read as transposed weights [in = O, out = C, kh, kw] is K'
    const Tensor kty = conv_transpose2d(y, wf, {}, p.stride, p.pad_h, rh);
    if (kty.shape() != in) {
      s.track(INFINITY);
      continue;
    }
    double mag = 1e-30;
    for (std::size_t i = 0; i < kx.size(); ++i) mag += std::fabs(double(kx[i]) * y[i]);
    s.track(std::fabs(oracle::dot(kx, y) - oracle::dot(x, kty)) / mag);
  }
  return s;
}

/// op(a x + b y) = a op(x) + b op(y) for bias-free conv2d and
/// conv_transpose2d; error relative to the largest output magnitude.
inline Sweep linearity_sweep(std::size_t n, unsigned seed) {
  oracle::Rng rng(seed);
  Sweep s{"linearity", 0, 0.0, 1e-5};
  for (std::size_t t = 0; t < n; ++t) {
    const Shape in{rng.range(1, 4), rng.range(3, 8), rng.range(3, 8)};
    const float a = rng.uniform(-2.0f, 2.0f);
    const float b = rng.uniform(-2.0f, 2.0f);
    const Tensor x = rng.tensor(in, false);
    const Tensor y = rng.tensor(in, false);
    Tensor mix(in);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    Tensor lhs, ox, oy;
    if (t % 2 == 0) {
      const ConvParams p{.kernel_h = 3, .kernel_w = 3, .stride = rng.range(1, 2), .pad_h = 1, .pad_w = 1,
                         .out_channels = rng.range(1, 4)};
      const NdArray w = rng.array({p.out_channels, in.channels, 3, 3}, false);
      lhs = conv2d(mix, w, {}, p);
      ox = conv2d(x, w, {}, p);
      oy = conv2d(y, w, {}, p);
    } else {
      const NdArray w = rng.array({in.channels, rng.range(1, 4), 3, 3}, false);
      const std::size_t stride = rng.range(1, 2);
      lhs = conv_transpose2d(mix, w, {}, stride, 1, stride - 1);
      ox = conv_transpose2d(x, w, {}, stride, 1, stride - 1);
      oy = conv_transpose2d(y, w, {}, stride, 1, stride - 1);
    }
    double scale = 1e-30, err = 0.0;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const double rhs = double(a) * ox[i] + double(b) * oy[i];
      scale = std::max(scale, std::fabs(rhs));
      err = std::max(err, std::fabs(lhs[i] - rhs));
    }
    s.track(err / scale);
  }
  return s;
}

inline std::vector<Sweep> all_sweeps(std::size_t n, unsigned seed) {
  return {conv2d_sweep(n, seed),      conv_transpose_sweep(n, seed + 1), asymmetric_sweep(n, seed + 2),
          pool_sweep(n, seed + 3),    batchnorm_sweep(n, seed + 4),      prelu_sweep(n, seed + 5),
          adjoint_sweep(n, seed + 6), linearity_sweep(n, seed + 7)};
}

}  // namespace suite
