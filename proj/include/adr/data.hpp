// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file data.hpp
/// @brief GDXray-layout ingestion, splitting, square resizing, augmentation
/// and dataset statistics.
///
/// Directory layout: `<root>/<series>/` holds images named `<series>_<index>.png`
/// (or `.pgm`) and an optional `ground_truth.txt` whose rows are
/// `index x1 x2 y1 y2` (whitespace separated, any numeric notation).

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adr/geometry.hpp"
#include "adr/image.hpp"
#include "adr/tensor.hpp"

namespace adr {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kGroundTruthFile = "ground_truth.txt";

struct AnnotationRecord {
  std::string series;
  int index = 0;
  std::filesystem::path image_path;
  int width = 0;
  int height = 0;
  std::vector<BBox> boxes;

  std::string id() const { return series + "/" + std::to_string(index); }
};

struct Diagnostic {
  std::filesystem::path file;
  int line = 0;
  std::string message;
};

struct GdxrayDataset {
  std::vector<AnnotationRecord> records;
  std::vector<Diagnostic> diagnostics;

  std::size_t labeled_count() const {
    std::size_t n = 0;
    for (const auto& r : records) n += !r.boxes.empty();
    return n;
  }
};

namespace detail {

/// Trailing decimal digits of a file stem: "C0001_0042" -> 42.
inline std::optional<int> trailing_index(const std::string& stem) {
  std::size_t end = stem.size();
  std::size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
  if (begin == end) return std::nullopt;
  return std::stoi(stem.substr(begin, end - begin));
}

inline std::optional<double> parse_number(const std::string& tok) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

struct GroundTruthRow {
  int index;
  BBox box;
};

/// Parses one ground-truth table; bad rows are reported, never dropped silently.
inline std::vector<GroundTruthRow> parse_ground_truth(std::istream& in, const std::filesystem::path& file,
                                                      std::vector<Diagnostic>& diags) {
  std::vector<GroundTruthRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::vector<std::string> toks;
    for (std::string t; ss >> t;) toks.push_back(t);
    if (toks.empty()) continue;
    if (toks.size() != 5) {
      diags.push_back({file, lineno, "expected 5 columns (index x1 x2 y1 y2), got " + std::to_string(toks.size())});
      continue;
    }
    std::array<double, 5> v{};
    bool ok = true;
    for (std::size_t i = 0; i < 5; ++i) {
      auto n = detail::parse_number(toks[i]);
      if (!n) {
        diags.push_back({file, lineno, "non-numeric field '" + toks[i] + "'"});
        ok = false;
        break;
      }
      v[i] = *n;
    }
    if (!ok) continue;
    if (v[0] != std::floor(v[0]) || v[0] < 0) {
      diags.push_back({file, lineno, "image index must be a non-negative integer"});
      continue;
    }
    const double x1 = v[1], x2 = v[2], y1 = v[3], y2 = v[4];
    if (x2 < x1 || y2 < y1) {
      diags.push_back({file, lineno, "implausible box (x2 < x1 or y2 < y1); check column order index x1 x2 y1 y2"});
      continue;
    }
    rows.push_back({static_cast<int>(v[0]), BBox(x1, y1, x2, y2, 0)});
  }
  return rows;
}

inline GdxrayDataset load_gdxray(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("load_gdxray: cannot read dataset root " + root.string());
  GdxrayDataset ds;

  std::vector<fs::path> series_dirs;
  for (const auto& e : fs::directory_iterator(root, ec))
    if (e.is_directory()) series_dirs.push_back(e.path());
  if (ec) throw DataError("load_gdxray: cannot list " + root.string() + ": " + ec.message());
  std::sort(series_dirs.begin(), series_dirs.end());

  for (const auto& dir : series_dirs) {
    const std::string series = dir.filename().string();
    std::map<int, AnnotationRecord> by_index;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file() || !is_image_file(e.path())) continue;
      const auto idx = detail::trailing_index(e.path().stem().string());
      if (!idx) {
        ds.diagnostics.push_back({e.path(), 0, "image name carries no numeric index"});
        continue;
      }
      if (by_index.count(*idx)) {
        ds.diagnostics.push_back({e.path(), 0, "duplicate image index " + std::to_string(*idx)});
        continue;
      }
      AnnotationRecord rec;
      rec.series = series;
      rec.index = *idx;
      rec.image_path = e.path();
      try {
        std::tie(rec.width, rec.height) = image_size(e.path());
      } catch (const ImageError& err) {
        ds.diagnostics.push_back({e.path(), 0, err.what()});
        continue;
      }
      by_index.emplace(*idx, std::move(rec));
    }

    const fs::path gt = dir / kGroundTruthFile;
    if (fs::exists(gt)) {
      std::ifstream in(gt);
      if (!in) {
        ds.diagnostics.push_back({gt, 0, "unreadable ground-truth table"});
      } else {
        for (const auto& row : parse_ground_truth(in, gt, ds.diagnostics)) {
          auto it = by_index.find(row.index);
          if (it == by_index.end()) {
            ds.diagnostics.push_back({gt, 0, "box references missing image index " + std::to_string(row.index)});
            continue;
          }
          AnnotationRecord& rec = it->second;
          BBox b = row.box;
          b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(rec.width));
          b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(rec.width));
          b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(rec.height));
          b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(rec.height));
          rec.boxes.push_back(b);
        }
      }
    }
    for (auto& [idx, rec] : by_index) ds.records.push_back(std::move(rec));
  }
  return ds;
}

struct DatasetSplit {
  std::vector<AnnotationRecord> train;
  std::vector<AnnotationRecord> test;
};

/// Seeded shuffle then partition. |test| = round(fraction * total). With
/// `by_series` whole series are assigned to the test side until the target is
/// reached, so near-duplicate frames never straddle the split.
inline DatasetSplit split(const std::vector<AnnotationRecord>& records, double test_fraction, std::uint64_t seed,
                          bool by_series = false) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split: test_fraction must lie in (0,1)");
  const std::size_t target = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(records.size())));
  Rng rng(seed);
  DatasetSplit out;
  std::vector<char> is_test(records.size(), 0);
  if (!by_series) {
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < target; ++i) is_test[order[i]] = 1;
  } else {
    std::vector<std::string> series;
    for (const auto& r : records)
      if (std::find(series.begin(), series.end(), r.series) == series.end()) series.push_back(r.series);
    rng.shuffle(series);
    std::size_t taken = 0;
    for (const auto& s : series) {
      if (taken >= target) break;
      for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].series == s) {
          is_test[i] = 1;
          ++taken;
        }
    }
  }
  for (std::size_t i = 0; i < records.size(); ++i) (is_test[i] ? out.test : out.train).push_back(records[i]);
  return out;
}

/// Affine map original -> square canvas: p' = p * scale + offset.
struct ResizeTransform {
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  int target = 0;

  BBox apply(const BBox& b) const {
    BBox o = b;
    o.x_min = b.x_min * scale + offset_x;
    o.x_max = b.x_max * scale + offset_x;
    o.y_min = b.y_min * scale + offset_y;
    o.y_max = b.y_max * scale + offset_y;
    return o;
  }

  BBox invert(const BBox& b) const {
    BBox o = b;
    o.x_min = (b.x_min - offset_x) / scale;
    o.x_max = (b.x_max - offset_x) / scale;
    o.y_min = (b.y_min - offset_y) / scale;
    o.y_max = (b.y_max - offset_y) / scale;
    return o;
  }
};

struct Resized {
  Image image;
  std::vector<BBox> boxes;
  ResizeTransform transform;
};

/// Aspect-preserving scale so the longer side equals `target`; the short
/// side is padded symmetrically with the image mean.
inline Resized resize_square(const Image& img, const std::vector<BBox>& boxes, int target) {
  if (img.empty()) throw DataError("resize_square: zero-sized image");
  if (target <= 0) throw std::invalid_argument("resize_square: target must be positive");
  Resized r;
  r.transform.target = target;
  r.transform.scale = static_cast<double>(target) / std::max(img.width, img.height);
  // The long side fills the canvas exactly; only the short side is padded.
  r.transform.offset_x = img.width >= img.height ? 0.0 : (target - img.width * r.transform.scale) / 2.0;
  r.transform.offset_y = img.height >= img.width ? 0.0 : (target - img.height * r.transform.scale) / 2.0;
  const double pad = img.mean();
  r.image = Image(target, target);
  const bool identity = img.width == target && img.height == target;
  for (int v = 0; v < target; ++v) {
    for (int u = 0; u < target; ++u) {
      if (identity) {
        r.image.at(u, v) = img.at(u, v);
        continue;
      }
      const double sx = (u + 0.5 - r.transform.offset_x) / r.transform.scale - 0.5;
      const double sy = (v + 0.5 - r.transform.offset_y) / r.transform.scale - 0.5;
      r.image.at(u, v) = to_u8(img.sample_bilinear(sx, sy, pad));
    }
  }
  r.boxes.reserve(boxes.size());
  for (const auto& b : boxes) r.boxes.push_back(r.transform.apply(b));
  return r;
}

struct AugmentPolicy {
  bool hflip = false;
  bool vflip = false;
  bool crop = false;
  bool scale = false;
  double probability = 0.5;
  double crop_min_fraction = 0.6;
  double scale_min = 0.8;
  double scale_max = 1.25;
  int crop_retries = 10;

  /// Presets: none, HFlip, HVFlip, HVFlip+Crop, HVFlip+Crop+scale.
  static AugmentPolicy preset(const std::string& name) {
    AugmentPolicy p;
    if (name == "none") return p;
    if (name == "HFlip") {
      p.hflip = true;
    } else if (name == "HVFlip") {
      p.hflip = p.vflip = true;
    } else if (name == "HVFlip+Crop") {
      p.hflip = p.vflip = p.crop = true;
    } else if (name == "HVFlip+Crop+scale") {
      p.hflip = p.vflip = p.crop = p.scale = true;
    } else {
      throw std::invalid_argument("unknown augmentation preset: " + name);
    }
    return p;
  }

  std::string name() const {
    if (!hflip && !vflip && !crop && !scale) return "none";
    if (hflip && !vflip && !crop && !scale) return "HFlip";
    if (hflip && vflip && !crop && !scale) return "HVFlip";
    if (hflip && vflip && crop && !scale) return "HVFlip+Crop";
    if (hflip && vflip && crop && scale) return "HVFlip+Crop+scale";
    return "custom";
  }
};

struct Augmented {
  Image image;
  std::vector<BBox> boxes;
};

/// Mirror about the vertical axis: x -> W - x.
inline Augmented hflip(const Image& img, const std::vector<BBox>& boxes) {
  Augmented a{Image(img.width, img.height), {}};
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) a.image.at(img.width - 1 - x, y) = img.at(x, y);
  for (BBox b : boxes) {
    const double x0 = img.width - b.x_max, x1 = img.width - b.x_min;
    b.x_min = x0;
    b.x_max = x1;
    a.boxes.push_back(b);
  }
  return a;
}

inline Augmented vflip(const Image& img, const std::vector<BBox>& boxes) {
  Augmented a{Image(img.width, img.height), {}};
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) a.image.at(x, img.height - 1 - y) = img.at(x, y);
  for (BBox b : boxes) {
    const double y0 = img.height - b.y_max, y1 = img.height - b.y_min;
    b.y_min = y0;
    b.y_max = y1;
    a.boxes.push_back(b);
  }
  return a;
}

namespace detail {

/// Clips to [0,w]x[0,h]; boxes whose (pre-clip) center left the window go.
inline std::vector<BBox> clip_keep_centered(const std::vector<BBox>& boxes, double w, double h) {
  std::vector<BBox> out;
  for (BBox b : boxes) {
    const double cx = b.cx(), cy = b.cy();
    if (cx < 0 || cx >= w || cy < 0 || cy >= h) continue;
    b.x_min = std::clamp(b.x_min, 0.0, w);
    b.x_max = std::clamp(b.x_max, 0.0, w);
    b.y_min = std::clamp(b.y_min, 0.0, h);
    b.y_max = std::clamp(b.y_max, 0.0, h);
    out.push_back(b);
  }
  return out;
}

}  // namespace detail

/// Integer crop window [x0, x0+w) x [y0, y0+h).
inline Augmented crop(const Image& img, const std::vector<BBox>& boxes, int x0, int y0, int w, int h) {
  if (w <= 0 || h <= 0 || x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height)
    throw std::invalid_argument("crop: window outside image");
  Augmented a{Image(w, h), {}};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) a.image.at(x, y) = img.at(x0 + x, y0 + y);
  std::vector<BBox> shifted;
  for (BBox b : boxes) {
    b.x_min -= x0;
    b.x_max -= x0;
    b.y_min -= y0;
    b.y_max -= y0;
    shifted.push_back(b);
  }
  a.boxes = detail::clip_keep_centered(shifted, w, h);
  return a;
}

/// Zoom by `s` about the image center on a canvas of unchanged size; the
/// uncovered border takes the image mean.
inline Augmented scale_about_center(const Image& img, const std::vector<BBox>& boxes, double s) {
  if (!(s > 0)) throw std::invalid_argument("scale_about_center: factor must be positive");
  const double cx = img.width / 2.0, cy = img.height / 2.0;
  const double pad = img.mean();
  Augmented a{Image(img.width, img.height), {}};
  for (int v = 0; v < img.height; ++v)
    for (int u = 0; u < img.width; ++u) {
      const double sx = (u + 0.5 - cx) / s + cx - 0.5;
      const double sy = (v + 0.5 - cy) / s + cy - 0.5;
      a.image.at(u, v) = to_u8(img.sample_bilinear(sx, sy, pad));
    }
  std::vector<BBox> scaled;
  for (BBox b : boxes) {
    b.x_min = (b.x_min - cx) * s + cx;
    b.x_max = (b.x_max - cx) * s + cx;
    b.y_min = (b.y_min - cy) * s + cy;
    b.y_max = (b.y_max - cy) * s + cy;
    scaled.push_back(b);
  }
  a.boxes = detail::clip_keep_centered(scaled, img.width, img.height);
  return a;
}

/// Applies each enabled transform with `policy.probability`, in the order
/// hflip, vflip, crop, scale.
inline Augmented augment(const Image& img, const std::vector<BBox>& boxes, const AugmentPolicy& policy, Rng& rng) {
  Augmented cur{img, boxes};
  if (policy.hflip && rng.bernoulli(policy.probability)) cur = hflip(cur.image, cur.boxes);
  if (policy.vflip && rng.bernoulli(policy.probability)) cur = vflip(cur.image, cur.boxes);
  if (policy.crop && rng.bernoulli(policy.probability)) {
    for (int attempt = 0; attempt < policy.crop_retries; ++attempt) {
      const double f = rng.uniform(policy.crop_min_fraction, 1.0);
      const int w = std::max(1, static_cast<int>(std::lround(cur.image.width * f)));
      const int h = std::max(1, static_cast<int>(std::lround(cur.image.height * f)));
      const int x0 = rng.uniform_int(0, cur.image.width - w);
      const int y0 = rng.uniform_int(0, cur.image.height - h);
      bool keeps_center = cur.boxes.empty();
      for (const auto& b : cur.boxes)
        if (b.cx() >= x0 && b.cx() < x0 + w && b.cy() >= y0 && b.cy() < y0 + h) keeps_center = true;
      if (!keeps_center) continue;
      cur = crop(cur.image, cur.boxes, x0, y0, w, h);
      break;
    }
  }
  if (policy.scale && rng.bernoulli(policy.probability)) {
    const double s = std::exp(rng.uniform(std::log(policy.scale_min), std::log(policy.scale_max)));
    Augmented next = scale_about_center(cur.image, cur.boxes, s);
    if (!next.boxes.empty() || cur.boxes.empty()) cur = std::move(next);
  }
  return cur;
}

inline Augmented augment(const Image& img, const std::vector<BBox>& boxes, const AugmentPolicy& policy,
                         std::uint64_t seed) {
  Rng rng(seed);
  return augment(img, boxes, policy, rng);
}

struct FiveNumberSummary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double whisker_low = 0, whisker_high = 0;  // extreme non-outlier values
  std::vector<double> outliers;              // beyond 1.5 IQR from the quartiles
  std::size_t count = 0;
};

/// Linear-interpolation quantile on sorted data.
inline double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) return 0.0;
  const double pos = q * static_cast<double>(s.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (s[hi] - s[lo]) * (pos - static_cast<double>(lo));
}

inline FiveNumberSummary five_number_summary(std::vector<double> v) {
  FiveNumberSummary f;
  f.count = v.size();
  if (v.empty()) return f;
  std::sort(v.begin(), v.end());
  f.min = v.front();
  f.max = v.back();
  f.q1 = quantile_sorted(v, 0.25);
  f.median = quantile_sorted(v, 0.5);
  f.q3 = quantile_sorted(v, 0.75);
  const double iqr = f.q3 - f.q1;
  const double lo = f.q1 - 1.5 * iqr, hi = f.q3 + 1.5 * iqr;
  f.whisker_low = f.max;
  f.whisker_high = f.min;
  for (double x : v) {
    if (x < lo || x > hi) {
      f.outliers.push_back(x);
    } else {
      f.whisker_low = std::min(f.whisker_low, x);
      f.whisker_high = std::max(f.whisker_high, x);
    }
  }
  return f;
}

struct Histogram {
  std::vector<double> edges;  // bucket i is [edges[i], edges[i+1]); last edge may be +inf
  std::vector<std::size_t> counts;

  explicit Histogram(std::vector<double> e = {}) : edges(std::move(e)), counts(edges.empty() ? 0 : edges.size() - 1) {}

  void add(double v) {
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
      if (v >= edges[i] && v < edges[i + 1]) {
        ++counts[i];
        return;
      }
    if (!counts.empty() && v >= edges.back()) ++counts.back();
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }

  std::size_t mode() const {
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
};

inline constexpr double kSmallAreaLimit = 32.0 * 32.0;
inline constexpr double kMediumAreaLimit = 96.0 * 96.0;

struct DatasetStats {
  std::size_t images = 0;
  std::size_t boxes = 0;
  std::size_t degenerate = 0;  // zero width or height; excluded from every histogram below
  Histogram side;              // sqrt(area), pixels
  Histogram size_class;        // small / medium / large by area
  Histogram ratio;             // width / height
  int heatmap_size = 32;
  std::vector<std::size_t> heatmap;  // row-major heatmap_size^2, normalized box centers
  FiveNumberSummary area_summary;
  FiveNumberSummary ratio_summary;

  std::size_t heat(int gx, int gy) const { return heatmap[static_cast<std::size_t>(gy) * heatmap_size + gx]; }
};

inline DatasetStats dataset_stats(const std::vector<AnnotationRecord>& records, int heatmap_size = 32) {
  const double inf = std::numeric_limits<double>::infinity();
  DatasetStats st;
  st.side = Histogram({0, 8, 16, 24, 32, 48, 64, 96, 128, 256, inf});
  st.size_class = Histogram({0, kSmallAreaLimit, kMediumAreaLimit, inf});
  st.ratio = Histogram({0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 3.0, 4.0, inf});
  st.heatmap_size = heatmap_size;
  st.heatmap.assign(static_cast<std::size_t>(heatmap_size) * heatmap_size, 0);
  std::vector<double> areas, ratios;
  st.images = records.size();
  for (const auto& r : records) {
    for (const auto& b : r.boxes) {
      ++st.boxes;
      if (!(b.width() > 0 && b.height() > 0)) {
        ++st.degenerate;
        continue;
      }
      const double a = area(b);
      const double ar = aspect_ratio(b);
      areas.push_back(a);
      ratios.push_back(ar);
      st.side.add(std::sqrt(a));
      st.size_class.add(a);
      st.ratio.add(ar);
      if (r.width > 0 && r.height > 0) {
        const int gx = std::clamp(static_cast<int>(std::floor(b.cx() / r.width * heatmap_size)), 0, heatmap_size - 1);
        const int gy = std::clamp(static_cast<int>(std::floor(b.cy() / r.height * heatmap_size)), 0, heatmap_size - 1);
        ++st.heatmap[static_cast<std::size_t>(gy) * heatmap_size + gx];
      }
    }
  }
  st.area_summary = five_number_summary(areas);
  st.ratio_summary = five_number_summary(ratios);
  return st;
}

/// Grayscale image -> (1, H, W) tensor, intensities mapped to roughly [-2, 2].
template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> t({1, img.height, img.width});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t.data[i] = static_cast<T>((img.pixels[i] - 127.5) / 64.0);
  return t;
}

}  // namespace adr
