// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file synth.hpp
/// @brief Seeded synthetic radiograph scenes: a smooth background with noise
/// and pore / inclusion / crack defects, plus exact ground-truth boxes.
///
/// Generator algorithm (all draws come from adr::Rng seeded per scene):
///   1. background(x, y) = base + tilt * ((x - W/2) cos t + (y - H/2) sin t) / (W/2)
///                         + wave * sin(2 pi (fx x + fy y) / W + phase)
///   2. draw defect count, then for each defect its kind, extent and contrast;
///      rasterize its support mask (ellipse test at pixel centers, or a stamped
///      1-2 px polyline) and reject placements whose box touches an earlier one;
///   3. shift support pixels by -contrast (pore, crack) or +contrast (inclusion);
///   4. add N(0, noise^2) per pixel and round to 8 bits.
/// The GT box of a defect is the tight pixel-aligned box of its support.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adr/data.hpp"
#include "adr/geometry.hpp"
#include "adr/image.hpp"
#include "adr/tensor.hpp"

namespace adr {

enum class DefectKind { pore, inclusion, crack };

inline std::string_view to_string(DefectKind k) {
  switch (k) {
    case DefectKind::pore: return "pore";
    case DefectKind::inclusion: return "inclusion";
    case DefectKind::crack: return "crack";
  }
  return "?";
}

inline DefectKind parse_defect_kind(std::string_view s) {
  if (s == "pore") return DefectKind::pore;
  if (s == "inclusion") return DefectKind::inclusion;
  if (s == "crack") return DefectKind::crack;
  throw std::invalid_argument("unknown defect kind: " + std::string(s));
}

struct SceneParams {
  int width = 64;
  int height = 64;
  int count_min = 1;
  int count_max = 3;
  std::vector<DefectKind> kinds{DefectKind::pore, DefectKind::inclusion, DefectKind::crack};
  double size_min = 8;  // defect extent (longest dimension), pixels
  double size_max = 24;
  double contrast_min = 40;  // intensity floor over local background
  double contrast_max = 60;
  double noise = 5;         // additive Gaussian sigma
  double tilt = 25;         // background gradient amplitude
  double wave = 8;          // low-frequency ripple amplitude
  std::uint64_t seed = 0;

  void validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("SceneParams: image size must be positive");
    if (count_min < 0 || count_max < count_min) throw std::invalid_argument("SceneParams: bad defect count range");
    if (count_max > 0 && kinds.empty()) throw std::invalid_argument("SceneParams: no defect kinds enabled");
    if (!(size_min >= 1 && size_max >= size_min)) throw std::invalid_argument("SceneParams: bad size range");
    if (size_max + 4 > std::min(width, height)) throw std::invalid_argument("SceneParams: size range exceeds image");
    if (!(contrast_min > 0 && contrast_max >= contrast_min))
      throw std::invalid_argument("SceneParams: bad contrast range");
    if (noise < 0 || tilt < 0 || wave < 0) throw std::invalid_argument("SceneParams: amplitudes must be >= 0");
  }
};

struct Scene {
  Image image;
  std::vector<BBox> boxes;
  std::vector<DefectKind> kinds;
  std::vector<std::vector<std::pair<int, int>>> support;  // (x, y) pixels per defect
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::vector<std::pair<int, int>> ellipse_support(double cx, double cy, double a, double b, double theta,
                                                        int w, int h) {
  std::vector<std::pair<int, int>> px;
  const double c = std::cos(theta), s = std::sin(theta);
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - a - 1)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + a + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - a - 1)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + a + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = (dx * c + dy * s) / a, v = (-dx * s + dy * c) / b;
      if (u * u + v * v <= 1.0) px.emplace_back(x, y);
    }
  if (px.empty()) px.emplace_back(std::clamp(static_cast<int>(cx), 0, w - 1), std::clamp(static_cast<int>(cy), 0, h - 1));
  return px;
}

inline std::vector<std::pair<int, int>> polyline_support(const std::vector<std::pair<double, double>>& pts,
                                                         int thickness, int w, int h) {
  std::vector<char> mask(static_cast<std::size_t>(w) * h, 0);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto [ax, ay] = pts[i];
    const auto [bx, by] = pts[i + 1];
    const double len = std::hypot(bx - ax, by - ay);
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 4)));
    for (int k = 0; k <= steps; ++k) {
      const double t = static_cast<double>(k) / steps;
      const int px = static_cast<int>(std::floor(ax + t * (bx - ax)));
      const int py = static_cast<int>(std::floor(ay + t * (by - ay)));
      for (int oy = 0; oy < thickness; ++oy)
        for (int ox = 0; ox < thickness; ++ox) {
          const int x = px + ox, y = py + oy;
          if (x >= 0 && x < w && y >= 0 && y < h) mask[static_cast<std::size_t>(y) * w + x] = 1;
        }
    }
  }
  std::vector<std::pair<int, int>> px;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask[static_cast<std::size_t>(y) * w + x]) px.emplace_back(x, y);
  return px;
}

inline BBox support_box(const std::vector<std::pair<int, int>>& px) {
  int x0 = px.front().first, x1 = x0, y0 = px.front().second, y1 = y0;
  for (auto [x, y] : px) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  return BBox(x0, y0, x1 + 1, y1 + 1, 0);
}

}  // namespace detail

inline Scene generate_scene(const SceneParams& p) {
  p.validate();
  Rng rng(p.seed);
  const int w = p.width, h = p.height;

  const double base = rng.uniform(95, 160);
  const double theta = rng.uniform(0, 2 * std::numbers::pi);
  const double tilt = rng.uniform(0, p.tilt);
  const double fx = rng.uniform(0.3, 1.5), fy = rng.uniform(0.3, 1.5);
  const double phase = rng.uniform(0, 2 * std::numbers::pi);
  std::vector<double> field(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (x + 0.5 - w / 2.0) * std::cos(theta) + (y + 0.5 - h / 2.0) * std::sin(theta);
      field[static_cast<std::size_t>(y) * w + x] =
          base + tilt * gx / (w / 2.0) + p.wave * std::sin(2 * std::numbers::pi * (fx * x + fy * y) / w + phase);
    }

  Scene scene;
  const int count = p.count_max > 0 ? rng.uniform_int(p.count_min, p.count_max) : 0;
  for (int d = 0; d < count; ++d) {
    const DefectKind kind = p.kinds[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(p.kinds.size()) - 1))];
    const double contrast = rng.uniform(p.contrast_min, p.contrast_max);
    for (int attempt = 0; attempt < 40; ++attempt) {
      const double extent = rng.uniform(p.size_min, p.size_max);
      std::vector<std::pair<int, int>> px;
      if (kind == DefectKind::crack) {
        const int thickness = rng.uniform_int(1, 2);
        const int segments = rng.uniform_int(2, 4);
        double heading = rng.uniform(0, 2 * std::numbers::pi);
        const double margin = extent / 2 + 2;
        double x = rng.uniform(margin, w - margin), y = rng.uniform(margin, h - margin);
        std::vector<std::pair<double, double>> pts;
        // Start so the walk stays roughly centered on the drawn point.
        x -= std::cos(heading) * extent / 2;
        y -= std::sin(heading) * extent / 2;
        pts.emplace_back(x, y);
        for (int s = 0; s < segments; ++s) {
          x += std::cos(heading) * extent / segments;
          y += std::sin(heading) * extent / segments;
          pts.emplace_back(x, y);
          heading += rng.uniform(-0.5, 0.5);
        }
        px = detail::polyline_support(pts, thickness, w, h);
      } else {
        const double a = extent / 2;
        const double b = a * rng.uniform(0.55, 1.0);
        const double rot = rng.uniform(0, std::numbers::pi);
        const double cx = rng.uniform(a + 2, w - a - 2), cy = rng.uniform(a + 2, h - a - 2);
        px = detail::ellipse_support(cx, cy, a, b, rot, w, h);
      }
      if (px.empty()) continue;
      const BBox box = detail::support_box(px);
      bool clash = false;
      for (const auto& other : scene.boxes) {
        const BBox grown(other.x_min - 2, other.y_min - 2, other.x_max + 2, other.y_max + 2);
        if (intersection_area(grown, box) > 0) clash = true;
      }
      if (clash) continue;
      const double sign = kind == DefectKind::inclusion ? 1.0 : -1.0;
      for (auto [x, y] : px) field[static_cast<std::size_t>(y) * w + x] += sign * contrast;
      scene.boxes.push_back(box);
      scene.kinds.push_back(kind);
      scene.support.push_back(std::move(px));
      break;
    }
  }

  scene.image = Image(w, h);
  for (std::size_t i = 0; i < field.size(); ++i) {
    const double noise = p.noise > 0 ? p.noise * rng.normal() : 0.0;
    scene.image.pixels[i] = to_u8(field[i] + noise);
  }
  return scene;
}

/// Per-image seed derived from a dataset seed and the image ordinal.
inline std::uint64_t scene_seed(std::uint64_t dataset_seed, std::uint64_t ordinal) {
  return detail::splitmix64(detail::splitmix64(dataset_seed) ^ (ordinal + 1));
}

/// One small defect (9 to 13 px) per 64x64 scene: roughly 50 background
/// pixels per defect-box pixel.
inline SceneParams imbalanced_scene_params(std::uint64_t seed = 0) {
  SceneParams p;
  p.count_min = p.count_max = 1;
  p.size_min = 9;
  p.size_max = 13;
  p.seed = seed;
  return p;
}

/// Background-to-defect area ratio of a set of scenes: (total pixels - box
/// area) / box area.
inline double background_ratio(const std::vector<Scene>& scenes) {
  double total = 0, fg = 0;
  for (const auto& s : scenes) {
    total += static_cast<double>(s.image.width) * s.image.height;
    for (const auto& b : s.boxes) fg += area(b);
  }
  return fg > 0 ? (total - fg) / fg : std::numeric_limits<double>::infinity();
}

/// Writes `count` scenes in the layout load_gdxray reads:
/// `<root>/C0001/C0001_0001.<ext>` plus one ground_truth.txt per series.
inline void write_synthetic_dataset(const std::filesystem::path& root, int count, SceneParams params,
                                    int series_size = 100, const std::string& ext = ".pgm") {
  namespace fs = std::filesystem;
  if (count < 0 || series_size <= 0) throw std::invalid_argument("write_synthetic_dataset: bad counts");
  fs::create_directories(root);
  const std::uint64_t dataset_seed = params.seed;
  for (int s = 0; s * series_size < count; ++s) {
    std::ostringstream name;
    name << "C" << std::setw(4) << std::setfill('0') << (s + 1);
    const fs::path dir = root / name.str();
    fs::create_directories(dir);
    std::ofstream gt(dir / kGroundTruthFile);
    if (!gt) throw DataError("cannot write " + (dir / kGroundTruthFile).string());
    for (int i = 0; i < series_size && s * series_size + i < count; ++i) {
      const int ordinal = s * series_size + i;
      params.seed = scene_seed(dataset_seed, static_cast<std::uint64_t>(ordinal));
      const Scene sc = generate_scene(params);
      std::ostringstream file;
      file << name.str() << "_" << std::setw(4) << std::setfill('0') << (i + 1) << ext;
      write_image(sc.image, dir / file.str());
      for (const auto& b : sc.boxes)
        gt << (i + 1) << " " << b.x_min << " " << b.x_max << " " << b.y_min << " " << b.y_max << "\n";
    }
  }
}

}  // namespace adr
