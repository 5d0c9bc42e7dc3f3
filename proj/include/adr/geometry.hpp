// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file geometry.hpp
/// @brief Axis-aligned boxes, IoU and class-aware greedy NMS.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace adr {

/// Thrown when an operation receives geometrically meaningless input
/// (zero-height box for an aspect ratio, non-positive anchor size, ...).
class DegenerateInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned rectangle in continuous pixel coordinates, origin top-left.
/// Width is exactly x_max - x_min; no exclusive-edge convention.
struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  std::optional<int> label;
  std::optional<double> score;

  BBox() = default;
  BBox(double x0, double y0, double x1, double y1) : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {}
  BBox(double x0, double y0, double x1, double y1, int lbl)
      : x_min(x0), y_min(y0), x_max(x1), y_max(y1), label(lbl) {}
  BBox(double x0, double y0, double x1, double y1, int lbl, double scr)
      : x_min(x0), y_min(y0), x_max(x1), y_max(y1), label(lbl), score(scr) {}

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double cx() const { return 0.5 * (x_min + x_max); }
  double cy() const { return 0.5 * (y_min + y_max); }

  bool valid() const {
    if (!(x_min <= x_max && y_min <= y_max)) return false;
    if (score && !(*score >= 0.0 && *score <= 1.0)) return false;
    return true;
  }

  static BBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  bool operator==(const BBox&) const = default;

  bool same_geometry(const BBox& o) const {
    return x_min == o.x_min && y_min == o.y_min && x_max == o.x_max && y_max == o.y_max;
  }
};

inline double area(const BBox& b) { return b.width() * b.height(); }

inline double aspect_ratio(const BBox& b) {
  if (!(b.height() > 0.0)) throw DegenerateInput("aspect_ratio: box has zero height");
  return b.width() / b.height();
}

inline double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

/// Intersection over union. A zero-area box has IoU 0 against anything.
inline double iou(const BBox& a, const BBox& b) {
  const double aa = area(a);
  const double ab = area(b);
  if (aa <= 0.0 || ab <= 0.0) return 0.0;
  const double inter = intersection_area(a, b);
  const double uni = aa + ab - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

/// Greedy class-aware non-maximum suppression.
///
/// Boxes are visited by descending score (ties keep input order). A box is
/// dropped when its IoU with an already kept box of the same label exceeds
/// `iou_threshold`. The result is sorted by descending score.
inline std::vector<BBox> nms(const std::vector<BBox>& detections, double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (const auto& d : detections) {
    if (!d.score) throw std::invalid_argument("nms: every detection must carry a score");
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return *detections[i].score > *detections[j].score;
  });

  std::vector<BBox> kept;
  for (std::size_t idx : order) {
    const BBox& cand = detections[idx];
    bool suppressed = false;
    for (const BBox& k : kept) {
      if (k.label != cand.label) continue;
      if (iou(k, cand) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

}  // namespace adr
