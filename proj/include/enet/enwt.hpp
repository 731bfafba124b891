#pragma once

// ENWT: a flat little-endian tensor container.
//
//   "ENWT" | u32 version (=1) | u32 record count | records...
//   record: u16 name length | UTF-8 name | u8 dtype (0 = F32, 1 = F16)
//           | u8 rank | rank x u32 dims | raw little-endian elements

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "enet/error.hpp"
#include "enet/graph.hpp"
#include "enet/tensor.hpp"

namespace enet {

namespace enwt {

inline constexpr char kMagic[4] = {'E', 'N', 'W', 'T'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 12;

/// Bytes a record spends on everything but its element payload.
inline std::size_t record_overhead(const std::string& name, std::size_t rank) {
  return 2 + name.size() + 1 + 1 + 4 * rank;
}

/// IEEE binary32 -> binary16 with round-to-nearest-even. Values beyond the
/// half range become infinity.
inline std::uint16_t float_to_half(float f) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const auto sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t mag = x & 0x7fffffffu;
  if (mag >= 0x7f800000u) return sign | (mag > 0x7f800000u ? 0x7e00u : 0x7c00u);
  if (mag >= 0x477ff000u) return sign | 0x7c00u;  // >= 65520 rounds past 65504
  if (mag < 0x38800000u) {
    // subnormal half: scale by 2^24 (exact) and round to an integer in [0, 1024]
    const float scaled = std::bit_cast<float>(mag) * 16777216.0f;
    return sign | static_cast<std::uint16_t>(std::nearbyint(scaled));
  }
  const std::uint32_t exp = (mag >> 23) - 127 + 15;
  const std::uint32_t mant = mag & 0x7fffffu;
  std::uint32_t h = (exp << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;
  return sign | static_cast<std::uint16_t>(h);
}

inline float half_to_float(std::uint16_t h) {
  const float sign = (h & 0x8000u) ? -1.0f : 1.0f;
  const unsigned exp = (h >> 10) & 0x1fu;
  const unsigned mant = h & 0x3ffu;
  if (exp == 0) return sign * std::ldexp(static_cast<float>(mant), -24);
  if (exp == 31) return mant ? std::numeric_limits<float>::quiet_NaN() : sign * std::numeric_limits<float>::infinity();
  return sign * std::ldexp(static_cast<float>(mant | 0x400u), static_cast<int>(exp) - 25);
}

namespace detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) u8(static_cast<std::uint8_t>(v >> s));
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

  void need(std::size_t n, const std::string& what) const {
    if (buf_.size() - pos_ < n) throw FormatError(pos_, "truncated " + what);
  }
  std::uint8_t u8(const std::string& what) {
    need(1, what);
    return buf_[pos_++];
  }
  std::uint16_t u16(const std::string& what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | buf_[pos_ + static_cast<std::size_t>(k)];
    pos_ += 4;
    return v;
  }
  const std::uint8_t* take(std::size_t n, const std::string& what) {
    need(n, what);
    const std::uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode(const WeightStore& store, DType dtype) {
  detail::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  if (store.size() > std::numeric_limits<std::uint32_t>::max()) throw Error("too many records for ENWT");
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, arr] : store) {
    if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error("weight name '" + name + "' cannot be stored in ENWT");
    }
    if (arr.rank() > 255) throw Error("weight '" + name + "' has rank above 255");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(dtype));
    w.u8(static_cast<std::uint8_t>(arr.rank()));
    for (std::size_t d : arr.dims()) {
      if (d > std::numeric_limits<std::uint32_t>::max()) throw Error("weight '" + name + "' dimension too large");
      w.u32(static_cast<std::uint32_t>(d));
    }
    for (float v : arr.data()) {
      if (dtype == DType::F32) {
        w.u32(std::bit_cast<std::uint32_t>(v));
      } else {
        const std::uint16_t h = float_to_half(v);
        if (std::isfinite(v) && (h & 0x7c00u) == 0x7c00u) {
          throw Error("weight '" + name + "' holds " + std::to_string(v) + ", outside the F16 range");
        }
        w.u16(h);
      }
    }
  }
  return std::move(w.buffer());
}

inline WeightStore decode(const std::vector<std::uint8_t>& buf) {
  detail::Reader r(buf);
  const std::uint8_t* magic = r.take(4, "header");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(0, "bad magic, not an ENWT file");
  const std::size_t version_at = r.offset();
  if (r.u32("header") != kVersion) throw FormatError(version_at, "unsupported ENWT version");
  const std::uint32_t count = r.u32("header");
  WeightStore store;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::size_t start = r.offset();
    const std::string label = "record " + std::to_string(k);
    const std::uint16_t len = r.u16(label);
    if (len == 0) throw FormatError(start, label + " has an empty name");
    const auto* np = r.take(len, label + " name");
    std::string name(reinterpret_cast<const char*>(np), len);
    const std::string rec = "record '" + name + "'";
    const std::size_t dtype_at = r.offset();
    const std::uint8_t dt = r.u8(rec);
    if (dt > 1) throw FormatError(dtype_at, rec + " has unknown dtype " + std::to_string(dt));
    const std::uint8_t rank = r.u8(rec);
    std::vector<std::size_t> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = r.u32(rec + " dims");
      if (d != 0 && n > std::numeric_limits<std::size_t>::max() / 8 / d) throw FormatError(r.offset(), rec + " too large");
      n *= d;
    }
    const std::size_t esize = element_size(static_cast<DType>(dt));
    const std::uint8_t* payload = r.take(n * esize, rec + " payload");
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint8_t* e = payload + i * esize;
      if (esize == 4) {
        const std::uint32_t bits = std::uint32_t(e[0]) | (std::uint32_t(e[1]) << 8) | (std::uint32_t(e[2]) << 16) |
                                   (std::uint32_t(e[3]) << 24);
        data[i] = std::bit_cast<float>(bits);
      } else {
        data[i] = half_to_float(static_cast<std::uint16_t>(e[0] | (e[1] << 8)));
      }
    }
    if (!store.emplace(name, NdArray(std::move(dims), std::move(data))).second) {
      throw FormatError(start, "duplicate " + rec);
    }
  }
  if (!r.done()) throw FormatError(r.offset(), "trailing bytes after last record");
  return store;
}

}  // namespace enwt

/// Writes `w` as an ENWT file; F16 uses round-to-nearest-even.
inline void save_weights(const WeightStore& w, DType dtype, const std::filesystem::path& path) {
  const auto bytes = enwt::encode(w, dtype);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

/// Reads an ENWT file; F16 payloads are widened to F32.
inline WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return enwt::decode(bytes);
}

}  // namespace enet
