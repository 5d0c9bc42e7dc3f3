// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file image.hpp
/// @brief 8-bit grayscale raster with PGM and PNG codecs.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace adr {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  double mean() const {
    if (pixels.empty()) return 0.0;
    double s = 0.0;
    for (auto p : pixels) s += p;
    return s / static_cast<double>(pixels.size());
  }

  /// Bilinear sample at continuous pixel-center coordinates; `outside` for
  /// samples that fall off the raster.
  double sample_bilinear(double x, double y, double outside) const {
    if (x < -0.5 || y < -0.5 || x > width - 0.5 || y > height - 0.5) return outside;
    const double cx = std::clamp(x, 0.0, static_cast<double>(width - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(height - 1));
    const int x0 = static_cast<int>(std::floor(cx));
    const int y0 = static_cast<int>(std::floor(cy));
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = cx - x0, fy = cy - y0;
    const double top = at(x0, y0) * (1 - fx) + at(x1, y0) * fx;
    const double bot = at(x0, y1) * (1 - fx) + at(x1, y1) * fx;
    return top * (1 - fy) + bot * fy;
  }

  bool operator==(const Image& o) const = default;
};

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

namespace detail {

inline std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

/// Skips whitespace and '#' comments in a PNM header.
inline void pnm_skip(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline int pnm_int(std::istream& in) {
  pnm_skip(in);
  int v = -1;
  if (!(in >> v)) throw ImageError("PGM: malformed header");
  return v;
}

}  // namespace detail

inline Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P2") throw ImageError(path.string() + ": not a grayscale PGM");
  const int w = detail::pnm_int(in);
  const int h = detail::pnm_int(in);
  const int maxval = detail::pnm_int(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw ImageError(path.string() + ": unsupported PGM header");
  Image img(w, h);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw ImageError(path.string() + ": truncated");
  } else {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(detail::pnm_int(in));
  }
  if (maxval != 255)
    for (auto& p : img.pixels) p = to_u8(p * 255.0 / maxval);
  return img;
}

inline void write_pgm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline Image read_png(const std::filesystem::path& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.string().c_str()))
    throw ImageError(path.string() + ": " + pi.message);
  pi.format = PNG_FORMAT_GRAY;
  Image img(static_cast<int>(pi.width), static_cast<int>(pi.height));
  if (!png_image_finish_read(&pi, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    throw ImageError(path.string() + ": " + msg);
  }
  return img;
}

inline void write_png(const Image& img, const std::filesystem::path& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&pi, path.string().c_str(), 0, img.pixels.data(), 0, nullptr))
    throw ImageError(path.string() + ": " + pi.message);
}

inline bool is_image_file(const std::filesystem::path& p) {
  const auto e = detail::lower_ext(p);
  return e == ".png" || e == ".pgm";
}

inline Image read_image(const std::filesystem::path& path) {
  const auto e = detail::lower_ext(path);
  if (e == ".png") return read_png(path);
  if (e == ".pgm") return read_pgm(path);
  throw ImageError(path.string() + ": unsupported image format (expected .png or .pgm)");
}

inline void write_image(const Image& img, const std::filesystem::path& path) {
  const auto e = detail::lower_ext(path);
  if (e == ".png") return write_png(img, path);
  if (e == ".pgm") return write_pgm(img, path);
  throw ImageError(path.string() + ": unsupported image format (expected .png or .pgm)");
}

/// Width and height without decoding pixel data where the format allows.
inline std::pair<int, int> image_size(const std::filesystem::path& path) {
  const auto e = detail::lower_ext(path);
  if (e == ".png") {
    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.string().c_str()))
      throw ImageError(path.string() + ": " + pi.message);
    const std::pair<int, int> wh{static_cast<int>(pi.width), static_cast<int>(pi.height)};
    png_image_free(&pi);
    return wh;
  }
  if (e == ".pgm") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageError("cannot open " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P5" && magic != "P2") throw ImageError(path.string() + ": not a grayscale PGM");
    const int w = detail::pnm_int(in);
    const int h = detail::pnm_int(in);
    return {w, h};
  }
  throw ImageError(path.string() + ": unsupported image format");
}

}  // namespace adr
