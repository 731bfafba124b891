#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "enet/error.hpp"
#include "enet/tensor.hpp"

// Numeric primitives for every layer type the network uses. Each kernel comes
// in two forms: an "into" form writing a caller-owned output (reusing its
// allocation) and a value-returning wrapper.
//
// Convolutions accumulate every output element in a fixed order: input
// channel, then kernel row, then kernel column, starting from +0 and adding
// the bias last. All code paths honor this order, so results are bitwise
// reproducible.

namespace enet {

struct ConvParams {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t dilation = 1;
  std::size_t out_channels = 1;
  bool has_bias = false;
  // Extra rows/columns appended to a transposed convolution's output.
  std::size_t output_padding = 0;

  bool operator==(const ConvParams&) const = default;
};

struct BnParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-5f;
};

struct PoolResult {
  Tensor values;
  IndexTensor indices;
};

namespace detail {

inline std::ptrdiff_t signed_size(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

inline std::ptrdiff_t floor_div(std::ptrdiff_t a, std::ptrdiff_t b) {
  std::ptrdiff_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::ptrdiff_t ceil_div(std::ptrdiff_t a, std::ptrdiff_t b) { return -floor_div(-a, b); }

// Output positions o in [lo, hi) whose input coordinate o*stride - pad + offset
// lands inside [0, extent).
struct ValidRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

inline ValidRange valid_outputs(std::size_t out_extent, std::size_t in_extent, std::size_t stride,
                                std::ptrdiff_t shift) {
  const auto s = signed_size(stride);
  std::ptrdiff_t lo = ceil_div(-shift, s);
  std::ptrdiff_t hi = floor_div(signed_size(in_extent) - 1 - shift, s) + 1;
  lo = std::max<std::ptrdiff_t>(lo, 0);
  hi = std::min<std::ptrdiff_t>(hi, signed_size(out_extent));
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

inline void check_bias(std::span<const float> bias, bool has_bias, std::size_t out_channels) {
  if (has_bias != !bias.empty()) {
    throw ShapeError(has_bias ? "convolution expects a bias" : "convolution has no bias but one was given");
  }
  if (has_bias && bias.size() != out_channels) {
    throw ShapeError("bias length " + std::to_string(bias.size()) + " does not match " +
                     std::to_string(out_channels) + " output channels");
  }
}

inline void add_bias(Tensor& out, std::span<const float> bias) {
  if (bias.empty()) return;
  for (std::size_t o = 0; o < out.shape().channels; ++o) {
    for (float& v : out.plane(o)) v = v + bias[o];
  }
}

inline void check_conv_weights(const Shape& in, const NdArray& w, const ConvParams& p) {
  if (w.rank() != 4) throw ShapeError("convolution weights must be rank 4, got " + dims_str(w.dims()));
  if (w.dim(0) != p.out_channels || w.dim(1) != in.channels || w.dim(2) != p.kernel_h ||
      w.dim(3) != p.kernel_w) {
    throw ShapeError("convolution weights " + dims_str(w.dims()) + " do not match input " + in.str() +
                     " and params [" + std::to_string(p.out_channels) + "x" + std::to_string(in.channels) +
                     "x" + std::to_string(p.kernel_h) + "x" + std::to_string(p.kernel_w) + "]");
  }
}

}  // namespace detail

/// Output shape of a forward convolution; throws ShapeError if any spatial
/// extent would be < 1.
inline Shape conv2d_output_shape(const Shape& in, const ConvParams& p) {
  if (p.kernel_h == 0 || p.kernel_w == 0 || p.stride == 0 || p.dilation == 0 || p.out_channels == 0) {
    throw ShapeError("convolution params must be positive");
  }
  if (p.dilation > 1 && p.stride != 1) throw ShapeError("dilated convolutions must have stride 1");
  const auto extent = [&](std::size_t n, std::size_t pad, std::size_t k) -> std::ptrdiff_t {
    const std::ptrdiff_t span = detail::signed_size(n + 2 * pad) - detail::signed_size(p.dilation * (k - 1)) - 1;
    if (span < 0) return 0;
    return span / detail::signed_size(p.stride) + 1;
  };
  const auto oh = extent(in.height, p.pad_h, p.kernel_h);
  const auto ow = extent(in.width, p.pad_w, p.kernel_w);
  if (oh < 1 || ow < 1) throw ShapeError("convolution output of input " + in.str() + " is empty");
  return {p.out_channels, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
}

/// General direct convolution supporting any dilation.
inline void conv2d_dilated(const Tensor& in, const NdArray& w, std::span<const float> bias, const ConvParams& p,
                           Tensor& out) {
  detail::check_conv_weights(in.shape(), w, p);
  detail::check_bias(bias, p.has_bias, p.out_channels);
  const Shape os = conv2d_output_shape(in.shape(), p);
  out.reset(os);
  const Shape& is = in.shape();
  const std::size_t s = p.stride;
  const std::size_t d = p.dilation;
  for (std::size_t o = 0; o < os.channels; ++o) {
    auto dst = out.plane(o);
    std::fill(dst.begin(), dst.end(), 0.0f);
    for (std::size_t c = 0; c < is.channels; ++c) {
      const auto src = in.plane(c);
      for (std::size_t i = 0; i < p.kernel_h; ++i) {
        const auto rows = detail::valid_outputs(os.height, is.height, s,
                                                detail::signed_size(i * d) - detail::signed_size(p.pad_h));
        for (std::size_t j = 0; j < p.kernel_w; ++j) {
          const float wv = w.at(o, c, i, j);
          const auto cols = detail::valid_outputs(os.width, is.width, s,
                                                  detail::signed_size(j * d) - detail::signed_size(p.pad_w));
          for (std::size_t y = rows.lo; y < rows.hi; ++y) {
            const std::size_t iy = y * s + i * d - p.pad_h;
            float* drow = dst.data() + y * os.width;
            const float* srow = src.data() + iy * is.width;
            for (std::size_t x = cols.lo; x < cols.hi; ++x) {
              drow[x] += wv * srow[x * s + j * d - p.pad_w];
            }
          }
        }
      }
    }
  }
  detail::add_bias(out, bias);
}

namespace detail {

// Dilation-1 path with a contiguous inner loop for stride 1.
inline void conv2d_dense(const Tensor& in, const NdArray& w, std::span<const float> bias, const ConvParams& p,
                         Tensor& out) {
  const Shape os = conv2d_output_shape(in.shape(), p);
  out.reset(os);
  const Shape& is = in.shape();
  const std::size_t s = p.stride;
  for (std::size_t o = 0; o < os.channels; ++o) {
    auto dst = out.plane(o);
    std::fill(dst.begin(), dst.end(), 0.0f);
    for (std::size_t c = 0; c < is.channels; ++c) {
      const float* src = in.plane(c).data();
      for (std::size_t i = 0; i < p.kernel_h; ++i) {
        const auto rows = valid_outputs(os.height, is.height, s, signed_size(i) - signed_size(p.pad_h));
        for (std::size_t j = 0; j < p.kernel_w; ++j) {
          const float wv = w.at(o, c, i, j);
          const auto cols = valid_outputs(os.width, is.width, s, signed_size(j) - signed_size(p.pad_w));
          if (cols.hi <= cols.lo) continue;
          for (std::size_t y = rows.lo; y < rows.hi; ++y) {
            float* __restrict drow = dst.data() + y * os.width;
            const float* __restrict srow = src + (y * s + i - p.pad_h) * is.width;
            if (s == 1) {
              const std::size_t shift = j - p.pad_w;  // modular; x + shift is in range
              for (std::size_t x = cols.lo; x < cols.hi; ++x) drow[x] += wv * srow[x + shift];
            } else {
              for (std::size_t x = cols.lo; x < cols.hi; ++x) drow[x] += wv * srow[x * s + j - p.pad_w];
            }
          }
        }
      }
    }
  }
  add_bias(out, bias);
}

}  // namespace detail

/// out[o,y,x] = bias_o + sum_{c,i,j} w[o,c,i,j] * in[c, y*s - pad_h + i*d, x*s - pad_w + j*d]
/// with zero padding. Weights are [out_ch, in_ch, kh, kw].
inline void conv2d(const Tensor& in, const NdArray& w, std::span<const float> bias, const ConvParams& p,
                   Tensor& out) {
  if (p.dilation != 1) {
    conv2d_dilated(in, w, bias, p, out);
    return;
  }
  detail::check_conv_weights(in.shape(), w, p);
  detail::check_bias(bias, p.has_bias, p.out_channels);
  detail::conv2d_dense(in, w, bias, p, out);
}

inline Tensor conv2d(const Tensor& in, const NdArray& w, std::span<const float> bias, const ConvParams& p) {
  Tensor out;
  conv2d(in, w, bias, p, out);
  return out;
}

inline Shape conv_transpose2d_output_shape(const Shape& in, std::size_t out_channels, std::size_t kernel_h,
                                           std::size_t kernel_w, std::size_t stride, std::size_t pad,
                                           std::size_t output_padding = 0) {
  if (stride == 0 || kernel_h == 0 || kernel_w == 0 || out_channels == 0) {
    throw ShapeError("transposed convolution params must be positive");
  }
  if (output_padding >= stride) throw ShapeError("output_padding must be smaller than stride");
  const auto extent = [&](std::size_t n, std::size_t k) {
    return detail::signed_size((n - 1) * stride + k + output_padding) - detail::signed_size(2 * pad);
  };
  const auto oh = extent(in.height, kernel_h);
  const auto ow = extent(in.width, kernel_w);
  if (oh < 1 || ow < 1) throw ShapeError("transposed convolution output of input " + in.str() + " is empty");
  return {out_channels, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
}

/// Adjoint of the strided forward convolution: every input element scatters
/// w[c,o,:,:] * in[c,y,x] into out[o, y*stride - pad + i, x*stride - pad + j].
/// Weights are [in_ch, out_ch, kh, kw].
inline void conv_transpose2d(const Tensor& in, const NdArray& w, std::span<const float> bias, std::size_t stride,
                             std::size_t pad, Tensor& out, std::size_t output_padding = 0) {
  const Shape& is = in.shape();
  if (w.rank() != 4 || w.dim(0) != is.channels) {
    throw ShapeError("transposed convolution weights " + dims_str(w.dims()) + " do not match input " + is.str());
  }
  const std::size_t oc = w.dim(1);
  const std::size_t kh = w.dim(2);
  const std::size_t kw = w.dim(3);
  if (!bias.empty() && bias.size() != oc) throw ShapeError("transposed convolution bias length mismatch");
  const Shape os = conv_transpose2d_output_shape(is, oc, kh, kw, stride, pad, output_padding);
  out.reset(os);
  for (std::size_t o = 0; o < oc; ++o) {
    auto dst = out.plane(o);
    std::fill(dst.begin(), dst.end(), 0.0f);
    for (std::size_t c = 0; c < is.channels; ++c) {
      const float* src = in.plane(c).data();
      for (std::size_t i = 0; i < kh; ++i) {
        // input rows y with 0 <= y*stride - pad + i < out height
        const auto rows = detail::valid_outputs(is.height, os.height, stride,
                                                detail::signed_size(i) - detail::signed_size(pad));
        for (std::size_t j = 0; j < kw; ++j) {
          const float wv = w.at(c, o, i, j);
          const auto cols = detail::valid_outputs(is.width, os.width, stride,
                                                  detail::signed_size(j) - detail::signed_size(pad));
          for (std::size_t y = rows.lo; y < rows.hi; ++y) {
            float* drow = dst.data() + (y * stride + i - pad) * os.width;
            const float* srow = src + y * is.width;
            for (std::size_t x = cols.lo; x < cols.hi; ++x) drow[x * stride + j - pad] += wv * srow[x];
          }
        }
      }
    }
  }
  detail::add_bias(out, bias);
}

inline Tensor conv_transpose2d(const Tensor& in, const NdArray& w, std::span<const float> bias, std::size_t stride,
                               std::size_t pad, std::size_t output_padding = 0) {
  Tensor out;
  conv_transpose2d(in, w, bias, stride, pad, out, output_padding);
  return out;
}

inline ConvParams asym_5x1_params(std::size_t out_channels) {
  return {.kernel_h = 5, .kernel_w = 1, .pad_h = 2, .pad_w = 0, .out_channels = out_channels};
}

inline ConvParams asym_1x5_params(std::size_t out_channels, bool has_bias) {
  return {.kernel_h = 1, .kernel_w = 5, .pad_h = 0, .pad_w = 2, .out_channels = out_channels, .has_bias = has_bias};
}

/// 5x1 convolution followed by 1x5 convolution, size preserving. The optional
/// bias is applied after the second convolution.
inline void conv_asymmetric5(const Tensor& in, const NdArray& w_5x1, const NdArray& w_1x5,
                             std::span<const float> bias, Tensor& out, Tensor& scratch) {
  if (w_5x1.rank() != 4 || w_1x5.rank() != 4) throw ShapeError("asymmetric kernels must be rank 4");
  conv2d(in, w_5x1, {}, asym_5x1_params(w_5x1.dim(0)), scratch);
  conv2d(scratch, w_1x5, bias, asym_1x5_params(w_1x5.dim(0), !bias.empty()), out);
}

inline Tensor conv_asymmetric5(const Tensor& in, const NdArray& w_5x1, const NdArray& w_1x5,
                               std::span<const float> bias = {}) {
  Tensor out;
  Tensor scratch;
  conv_asymmetric5(in, w_5x1, w_1x5, bias, out, scratch);
  return out;
}

/// Non-overlapping 2x2 max pooling. Each index is the flat row-major position
/// of the selected element in its source plane; ties go to the smallest index.
inline void maxpool2x2(const Tensor& in, Tensor& values, IndexTensor& indices) {
  const Shape& is = in.shape();
  if (is.height % 2 != 0 || is.width % 2 != 0) {
    throw ShapeError("max pooling needs even height and width, got " + is.str());
  }
  if (is.plane() > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
    throw ShapeError("plane too large for 32-bit pool indices");
  }
  const Shape os{is.channels, is.height / 2, is.width / 2};
  values.reset(os);
  indices.reset(os);
  for (std::size_t c = 0; c < is.channels; ++c) {
    const auto src = in.plane(c);
    auto vdst = values.plane(c);
    auto idst = indices.plane(c);
    for (std::size_t y = 0; y < os.height; ++y) {
      for (std::size_t x = 0; x < os.width; ++x) {
        const std::size_t base = 2 * y * is.width + 2 * x;
        const std::size_t cand[4] = {base, base + 1, base + is.width, base + is.width + 1};
        std::size_t best = cand[0];
        for (std::size_t k = 1; k < 4; ++k) {
          if (src[cand[k]] > src[best]) best = cand[k];
        }
        vdst[y * os.width + x] = src[best];
        idst[y * os.width + x] = static_cast<std::int32_t>(best);
      }
    }
  }
}

inline PoolResult maxpool2x2(const Tensor& in) {
  PoolResult r;
  maxpool2x2(in, r.values, r.indices);
  return r;
}

/// Scatters values to their recorded positions in a zero C x out_h x out_w map.
inline void max_unpool2x2(const Tensor& values, const IndexTensor& indices, std::size_t out_h, std::size_t out_w,
                          Tensor& out) {
  const Shape& vs = values.shape();
  if (indices.shape() != vs) {
    throw ShapeError("unpool indices " + indices.shape().str() + " do not match values " + vs.str());
  }
  if (out_h != 2 * vs.height || out_w != 2 * vs.width) {
    throw ShapeError("unpool output must be twice the input size");
  }
  out.reset({vs.channels, out_h, out_w});
  out.fill(0.0f);
  const auto limit = static_cast<std::int64_t>(out_h * out_w);
  for (std::size_t c = 0; c < vs.channels; ++c) {
    const auto v = values.plane(c);
    const auto idx = indices.plane(c);
    auto dst = out.plane(c);
    for (std::size_t k = 0; k < v.size(); ++k) {
      const std::int64_t at = idx[k];
      if (at < 0 || at >= limit) {
        throw CorruptIndicesError("pool index " + std::to_string(at) + " out of range [0, " +
                                  std::to_string(limit) + ") in channel " + std::to_string(c));
      }
      dst[static_cast<std::size_t>(at)] = v[k];
    }
  }
}

inline Tensor max_unpool2x2(const Tensor& values, const IndexTensor& indices, std::size_t out_h, std::size_t out_w) {
  Tensor out;
  max_unpool2x2(values, indices, out_h, out_w, out);
  return out;
}

inline void batchnorm_infer(const Tensor& in, const BnParams& p, Tensor& out) {
  const std::size_t ch = in.shape().channels;
  if (p.gamma.size() != ch || p.beta.size() != ch || p.running_mean.size() != ch || p.running_var.size() != ch) {
    throw ShapeError("batch norm parameters do not match " + std::to_string(ch) + " channels");
  }
  out.reset(in.shape());
  for (std::size_t c = 0; c < ch; ++c) {
    const float sd = std::sqrt(p.running_var[c] + p.epsilon);
    const float g = p.gamma[c];
    const float m = p.running_mean[c];
    const float b = p.beta[c];
    const auto src = in.plane(c);
    auto dst = out.plane(c);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = g * (src[k] - m) / sd + b;
  }
}

inline Tensor batchnorm_infer(const Tensor& in, const BnParams& p) {
  Tensor out;
  batchnorm_infer(in, p, out);
  return out;
}

inline void prelu(const Tensor& in, std::span<const float> slopes, Tensor& out) {
  if (slopes.size() != in.shape().channels) {
    throw ShapeError("PReLU has " + std::to_string(slopes.size()) + " slopes for " +
                     std::to_string(in.shape().channels) + " channels");
  }
  out.reset(in.shape());
  for (std::size_t c = 0; c < slopes.size(); ++c) {
    const float a = slopes[c];
    const auto src = in.plane(c);
    auto dst = out.plane(c);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] >= 0.0f ? src[k] : a * src[k];
  }
}

inline Tensor prelu(const Tensor& in, std::span<const float> slopes) {
  Tensor out;
  prelu(in, slopes, out);
  return out;
}

inline void add(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.shape() != b.shape()) throw ShapeError("add of " + a.shape().str() + " and " + b.shape().str());
  out.reset(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out;
  add(a, b, out);
  return out;
}

inline void concat_channels(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.shape().height != b.shape().height || a.shape().width != b.shape().width) {
    throw ShapeError("concat of " + a.shape().str() + " and " + b.shape().str());
  }
  out.reset({a.shape().channels + b.shape().channels, a.shape().height, a.shape().width});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out;
  concat_channels(a, b, out);
  return out;
}

inline void pad_channels(const Tensor& in, std::size_t target_channels, Tensor& out) {
  if (target_channels < in.shape().channels) {
    throw ShapeError("cannot pad " + in.shape().str() + " down to " + std::to_string(target_channels) + " channels");
  }
  out.reset({target_channels, in.shape().height, in.shape().width});
  std::copy(in.data().begin(), in.data().end(), out.data().begin());
  std::fill(out.data().begin() + static_cast<std::ptrdiff_t>(in.size()), out.data().end(), 0.0f);
}

inline Tensor pad_channels(const Tensor& in, std::size_t target_channels) {
  Tensor out;
  pad_channels(in, target_channels, out);
  return out;
}

/// Identity at inference (inverted dropout scales at train time).
inline void spatial_dropout_infer(const Tensor& in, Tensor& out) {
  out.reset(in.shape());
  std::copy(in.data().begin(), in.data().end(), out.data().begin());
}

inline Tensor spatial_dropout_infer(const Tensor& in) { return in; }

}  // namespace enet
