// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file anchors.hpp
/// @brief Dense multi-level anchor grid, anchor/GT matching and the
/// center/log-size box parameterization.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "adr/geometry.hpp"

namespace adr {

/// Anchor layout. Each spatial location carries |aspect_ratios| x
/// |octave_scales| anchors; with the defaults that is 25.
struct AnchorSpec {
  std::vector<int> levels{3, 4, 5};
  /// Optional per-level override of the base area (pixels^2). Empty means the
  /// RetinaNet ladder: side 2^(level+2), i.e. 32^2 at level 3 up to 512^2 at 7.
  std::vector<double> base_areas;
  std::vector<double> aspect_ratios{0.5, 0.75, 1.0, 1.25, 1.5};
  std::vector<double> octave_scales{1.0, std::pow(2.0, 0.2), std::pow(2.0, 0.4), std::pow(2.0, 0.6),
                                    std::pow(2.0, 0.8)};
  /// Multiplier on anchor side length ("anchor size" knob).
  double global_scale = 2.0;

  std::size_t anchors_per_location() const { return aspect_ratios.size() * octave_scales.size(); }

  double base_area(std::size_t level_pos) const {
    if (!base_areas.empty()) return base_areas.at(level_pos);
    const double side = std::ldexp(1.0, levels.at(level_pos) + 2);
    return side * side;
  }

  void validate() const {
    if (levels.empty()) throw std::invalid_argument("AnchorSpec: levels list is empty");
    if (!base_areas.empty() && base_areas.size() != levels.size())
      throw std::invalid_argument("AnchorSpec: base_areas must align with levels");
    if (aspect_ratios.empty() || octave_scales.empty())
      throw std::invalid_argument("AnchorSpec: ratios and scales must be non-empty");
    for (double r : aspect_ratios)
      if (!(r > 0)) throw std::invalid_argument("AnchorSpec: aspect ratios must be positive");
    for (double s : octave_scales)
      if (!(s > 0)) throw std::invalid_argument("AnchorSpec: octave scales must be positive");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (levels[i] < 0 || levels[i] > 12) throw std::invalid_argument("AnchorSpec: level out of range");
      if (!(base_area(i) > 0)) throw std::invalid_argument("AnchorSpec: base area must be positive");
    }
    if (!(global_scale > 0)) throw std::invalid_argument("AnchorSpec: global_scale must be positive");
  }
};

struct AnchorLevel {
  int level = 0;
  int stride = 0;
  int grid_w = 0;
  int grid_h = 0;
  std::vector<BBox> anchors;  // ((y * grid_w + x) * A + ratio * |octaves| + octave)
};

struct AnchorGrid {
  AnchorSpec spec;
  int input_size = 0;
  std::vector<AnchorLevel> levels;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& l : levels) n += l.anchors.size();
    return n;
  }

  /// All anchors concatenated in level order; this is the index space the
  /// detector heads and the matcher share.
  std::vector<BBox> flat() const {
    std::vector<BBox> out;
    out.reserve(total());
    for (const auto& l : levels) out.insert(out.end(), l.anchors.begin(), l.anchors.end());
    return out;
  }
};

inline AnchorGrid generate_anchors(const AnchorSpec& spec, int input_size) {
  spec.validate();
  if (input_size <= 0) throw std::invalid_argument("generate_anchors: input_size must be positive");
  AnchorGrid grid;
  grid.spec = spec;
  grid.input_size = input_size;
  for (std::size_t li = 0; li < spec.levels.size(); ++li) {
    AnchorLevel lvl;
    lvl.level = spec.levels[li];
    lvl.stride = 1 << lvl.level;
    lvl.grid_w = input_size / lvl.stride;
    lvl.grid_h = input_size / lvl.stride;

    // Shapes are the same at every location of a level.
    std::vector<std::pair<double, double>> shapes;
    for (double r : spec.aspect_ratios) {
      for (double o : spec.octave_scales) {
        const double a = spec.base_area(li) * o * o * spec.global_scale * spec.global_scale;
        shapes.emplace_back(std::sqrt(a * r), std::sqrt(a / r));
      }
    }
    lvl.anchors.reserve(static_cast<std::size_t>(lvl.grid_w) * lvl.grid_h * shapes.size());
    for (int y = 0; y < lvl.grid_h; ++y) {
      for (int x = 0; x < lvl.grid_w; ++x) {
        const double cx = (x + 0.5) * lvl.stride;
        const double cy = (y + 0.5) * lvl.stride;
        for (const auto& [w, h] : shapes) lvl.anchors.push_back(BBox::from_center(cx, cy, w, h));
      }
    }
    grid.levels.push_back(std::move(lvl));
  }
  return grid;
}

using BoxDelta = std::array<double, 4>;

/// (dx, dy, dw, dh) = ((cx_g - cx_a) / w_a, (cy_g - cy_a) / h_a, ln(w_g / w_a), ln(h_g / h_a)).
inline BoxDelta encode_box(const BBox& anchor, const BBox& gt) {
  if (!(anchor.width() > 0 && anchor.height() > 0))
    throw DegenerateInput("encode_box: anchor must have positive size");
  if (!(gt.width() > 0 && gt.height() > 0)) throw DegenerateInput("encode_box: ground truth must have positive size");
  return {(gt.cx() - anchor.cx()) / anchor.width(), (gt.cy() - anchor.cy()) / anchor.height(),
          std::log(gt.width() / anchor.width()), std::log(gt.height() / anchor.height())};
}

inline BBox decode_box(const BBox& anchor, const BoxDelta& d) {
  if (!(anchor.width() > 0 && anchor.height() > 0))
    throw DegenerateInput("decode_box: anchor must have positive size");
  const double cx = anchor.cx() + d[0] * anchor.width();
  const double cy = anchor.cy() + d[1] * anchor.height();
  const double w = anchor.width() * std::exp(d[2]);
  const double h = anchor.height() * std::exp(d[3]);
  return BBox::from_center(cx, cy, w, h);
}

enum class MatchState : std::uint8_t { negative, positive, ignored };

struct MatchAssignment {
  std::vector<MatchState> state;
  std::vector<int> gt_index;         // -1 unless positive
  std::vector<double> max_iou;       // best IoU against any GT
  std::vector<BoxDelta> target;      // meaningful for positives only

  std::size_t num_positive() const {
    std::size_t n = 0;
    for (auto s : state) n += (s == MatchState::positive);
    return n;
  }
};

struct MatchThresholds {
  double positive = 0.5;
  double negative = 0.4;
};

/// Positive when max IoU >= positive threshold, negative below the negative
/// threshold, ignored in between. Each GT's best anchor is forced positive.
inline MatchAssignment match_anchors(const std::vector<BBox>& anchors, const std::vector<BBox>& gt,
                                     MatchThresholds th = {}) {
  if (th.positive < th.negative) throw std::invalid_argument("match_anchors: pos_thresh < neg_thresh");
  const std::size_t n = anchors.size();
  MatchAssignment m;
  m.state.assign(n, MatchState::negative);
  m.gt_index.assign(n, -1);
  m.max_iou.assign(n, 0.0);
  m.target.assign(n, BoxDelta{0, 0, 0, 0});
  if (gt.empty()) return m;

  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best_iou(gt.size(), 0.0);
  std::vector<std::size_t> gt_best_anchor(gt.size(), n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = iou(anchors[a], gt[g]);
      if (v > m.max_iou[a]) {
        m.max_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      if (v > gt_best_iou[g]) {
        gt_best_iou[g] = v;
        gt_best_anchor[g] = a;
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (best_gt[a] >= 0 && m.max_iou[a] >= th.positive) {
      m.state[a] = MatchState::positive;
      m.gt_index[a] = best_gt[a];
    } else if (m.max_iou[a] < th.negative) {
      m.state[a] = MatchState::negative;
    } else {
      m.state[a] = MatchState::ignored;
    }
  }
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const std::size_t a = gt_best_anchor[g];
    if (a == n) continue;  // zero overlap with every anchor
    m.state[a] = MatchState::positive;
    m.gt_index[a] = static_cast<int>(g);
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (m.state[a] == MatchState::positive) m.target[a] = encode_box(anchors[a], gt[m.gt_index[a]]);
  }
  return m;
}

inline MatchAssignment match_anchors(const AnchorGrid& grid, const std::vector<BBox>& gt, MatchThresholds th = {}) {
  return match_anchors(grid.flat(), gt, th);
}

}  // namespace adr
