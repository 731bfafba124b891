#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "enet/error.hpp"

namespace enet {

/// Channels x height x width of a single-image feature map.
struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t plane() const { return height * width; }
  std::size_t elements() const { return channels * height * width; }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << channels << "x" << height << "x" << width;
    return os.str();
  }
};

/// Throws ShapeError unless every dimension is positive and the byte size of
/// a float tensor of this shape is addressable.
inline void check_shape(const Shape& s) {
  if (s.channels == 0 || s.height == 0 || s.width == 0) {
    throw ShapeError("shape " + s.str() + " has a zero dimension");
  }
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max() / sizeof(float);
  if (s.height > kMax / s.width || s.channels > kMax / (s.height * s.width)) {
    throw ShapeError("element count of shape " + s.str() + " overflows");
  }
}

enum class DType : std::uint8_t { F32 = 0, F16 = 1 };

inline std::size_t element_size(DType t) { return t == DType::F32 ? 4 : 2; }

/// Dense C x H x W tensor, row-major in (channel, row, column) order.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(const Shape& shape, T fill = T{}) : shape_(shape) {
    check_shape(shape);
    data_.assign(shape.elements(), fill);
  }

  BasicTensor(const Shape& shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    check_shape(shape);
    if (data_.size() != shape.elements()) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape.str());
    }
  }

  static BasicTensor create(const Shape& shape, T fill) { return BasicTensor(shape, fill); }

  /// Resizes to `shape` keeping the allocation when large enough. Contents
  /// are unspecified afterwards.
  void reset(const Shape& shape) {
    check_shape(shape);
    shape_ = shape;
    data_.resize(shape.elements());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  std::span<T> plane(std::size_t c) { return std::span<T>(data_).subspan(c * shape_.plane(), shape_.plane()); }
  std::span<const T> plane(std::size_t c) const {
    return std::span<const T>(data_).subspan(c * shape_.plane(), shape_.plane());
  }

  std::size_t offset(std::size_t c, std::size_t y, std::size_t x) const {
    return (c * shape_.height + y) * shape_.width + x;
  }
  T& at(std::size_t c, std::size_t y, std::size_t x) { return data_[offset(c, y, x)]; }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const { return data_[offset(c, y, x)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
/// Per-plane flat indices produced by max pooling.
using IndexTensor = BasicTensor<std::int32_t>;

/// N-dimensional float array; carries convolution kernels and the per-channel
/// vectors of BatchNorm / PReLU inside a WeightStore.
class NdArray {
 public:
  NdArray() = default;

  explicit NdArray(std::vector<std::size_t> dims, float fill = 0.0f) : dims_(std::move(dims)) {
    data_.assign(count(dims_), fill);
  }

  NdArray(std::vector<std::size_t> dims, std::vector<float> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != count(dims_)) {
      throw ShapeError("array data length does not match its dims");
    }
  }

  static std::size_t count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  const float& operator[](std::size_t i) const { return data_[i]; }

  /// Rank-4 accessor for [d0, d1, d2, d3] kernels.
  float& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
  }
  float at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
  }

  bool operator==(const NdArray&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<float> data_;
};

inline std::string dims_str(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << "]";
  return os.str();
}

/// Per-pixel class indices, H x W.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> labels;

  std::uint32_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  bool operator==(const LabelMap&) const = default;
};

/// True iff shapes match and |a_i - b_i| <= atol + rtol * |b_i| everywhere.
inline bool approx_eq(const Tensor& a, const Tensor& b, float atol, float rtol) {
  if (a.shape() != b.shape() || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float diff = std::fabs(a[i] - b[i]);
    if (!(diff <= atol + rtol * std::fabs(b[i]))) return false;
  }
  return true;
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<float>::infinity();
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

/// Same shape and identical bit patterns (distinguishes -0 from +0, compares NaN payloads).
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && a.size() == b.size() &&
         (a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0);
}

inline bool all_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace enet
