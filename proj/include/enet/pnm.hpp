#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "enet/error.hpp"
#include "enet/tensor.hpp"

namespace enet {

/// Raw 8-bit binary netpbm image (P5 grey or P6 RGB), samples interleaved.
struct PnmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 for P5, 3 for P6
  std::vector<std::uint8_t> pixels;
};

namespace detail {

// Reads one header token, skipping whitespace and '#' comments.
inline std::string pnm_token(const std::vector<std::uint8_t>& buf, std::size_t& pos) {
  for (;;) {
    while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') tok.push_back(static_cast<char>(buf[pos++]));
  if (tok.empty()) throw FormatError(pos, "truncated netpbm header");
  return tok;
}

inline std::size_t pnm_number(const std::vector<std::uint8_t>& buf, std::size_t& pos, const char* what) {
  const std::size_t at = pos;
  const std::string tok = pnm_token(buf, pos);
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }) || tok.size() > 9) {
    throw FormatError(at, std::string("bad netpbm ") + what + " '" + tok + "'");
  }
  return std::stoul(tok);
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& header,
                       const std::vector<std::uint8_t>& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << header;
  os.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace detail

inline PnmImage decode_pnm(const std::vector<std::uint8_t>& buf) {
  std::size_t pos = 0;
  const std::string magic = detail::pnm_token(buf, pos);
  if (magic != "P5" && magic != "P6") throw FormatError(0, "unsupported netpbm type '" + magic + "', need P5 or P6");
  PnmImage img;
  img.channels = magic == "P6" ? 3 : 1;
  img.width = detail::pnm_number(buf, pos, "width");
  img.height = detail::pnm_number(buf, pos, "height");
  const std::size_t maxval_at = pos;
  const std::size_t maxval = detail::pnm_number(buf, pos, "maxval");
  if (maxval != 255) throw FormatError(maxval_at, "only maxval 255 is supported, got " + std::to_string(maxval));
  if (img.width == 0 || img.height == 0) throw FormatError(maxval_at, "empty image");
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw FormatError(pos, "missing whitespace after header");
  ++pos;
  const std::size_t n = img.width * img.height * img.channels;
  if (buf.size() - pos < n) throw FormatError(pos, "truncated pixel data");
  img.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

inline PnmImage read_pnm(const std::filesystem::path& path) { return decode_pnm(detail::read_file(path)); }

inline void write_pnm(const PnmImage& img, const std::filesystem::path& path) {
  std::ostringstream hdr;
  hdr << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  detail::write_file(path, hdr.str(), img.pixels);
}

/// Loads a binary P6 image as a 3 x H x W tensor in [0, 1] (value / 255),
/// channels R, G, B.
inline Tensor load_ppm(const std::filesystem::path& path) {
  const PnmImage img = read_pnm(path);
  if (img.channels != 3) throw FormatError(0, path.string() + " is not a P6 (RGB) image");
  Tensor t({3, img.height, img.width});
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        t.at(c, y, x) = static_cast<float>(img.pixels[(y * img.width + x) * 3 + c]) / 255.0f;
      }
    }
  }
  return t;
}

/// Inverse of load_ppm: values are clamped to [0, 1] and rounded to 8 bits.
inline void save_ppm(const Tensor& rgb, const std::filesystem::path& path) {
  const Shape& s = rgb.shape();
  if (s.channels != 3) throw ShapeError("save_ppm needs 3 channels, got " + s.str());
  PnmImage img{s.width, s.height, 3, std::vector<std::uint8_t>(s.plane() * 3)};
  for (std::size_t y = 0; y < s.height; ++y) {
    for (std::size_t x = 0; x < s.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(rgb.at(c, y, x), 0.0f, 1.0f);
        img.pixels[(y * s.width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  write_pnm(img, path);
}

/// Class indices as a P5 grey map.
inline void save_labelmap(const LabelMap& labels, const std::filesystem::path& path) {
  PnmImage img{labels.width, labels.height, 1, {}};
  img.pixels.reserve(labels.labels.size());
  for (auto l : labels.labels) {
    if (l > 255) throw DomainError("class " + std::to_string(l) + " does not fit an 8-bit label map");
    img.pixels.push_back(static_cast<std::uint8_t>(l));
  }
  write_pnm(img, path);
}

using Rgb = std::array<std::uint8_t, 3>;
using Palette = std::map<std::uint32_t, Rgb>;

/// Parses "index r g b" lines; '#' starts a comment line. FormatError offsets
/// are 1-based line numbers.
inline Palette read_palette(std::istream& is) {
  Palette p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long idx = 0;
    long long rgb[3] = {0, 0, 0};
    std::string extra;
    if (!(ls >> idx >> rgb[0] >> rgb[1] >> rgb[2]) || (ls >> extra)) {
      throw FormatError(lineno, "expected 'index r g b'");
    }
    if (idx < 0 || idx > 0xffffffffLL) throw FormatError(lineno, "bad palette index");
    for (long long v : rgb) {
      if (v < 0 || v > 255) throw FormatError(lineno, "color component outside [0, 255]");
    }
    const Rgb color{static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]),
                    static_cast<std::uint8_t>(rgb[2])};
    if (!p.emplace(static_cast<std::uint32_t>(idx), color).second) {
      throw FormatError(lineno, "duplicate palette index " + std::to_string(idx));
    }
  }
  return p;
}

inline Palette load_palette(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return read_palette(is);
}

/// Labels rendered through a palette as a P6 image.
inline void save_colormap(const LabelMap& labels, const Palette& palette, const std::filesystem::path& path) {
  PnmImage img{labels.width, labels.height, 3, {}};
  img.pixels.reserve(labels.labels.size() * 3);
  for (auto l : labels.labels) {
    auto it = palette.find(l);
    if (it == palette.end()) throw PaletteError("palette has no entry for class " + std::to_string(l));
    img.pixels.insert(img.pixels.end(), it->second.begin(), it->second.end());
  }
  write_pnm(img, path);
}

}  // namespace enet
