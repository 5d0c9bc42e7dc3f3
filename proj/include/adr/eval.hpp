// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file eval.hpp
/// @brief TP/FP/FN classification, precision/recall, 101-point AP and the
/// 12-entry COCO-style summary.
///
/// Matching rule (shared by every metric here): within one image and one
/// label, detections are visited by descending score (stable). Each takes
/// the still-unmatched GT of highest IoU provided IoU >= threshold (ties go
/// to the lower GT index). With an area range active, in-range GTs are
/// preferred; a detection matched to an out-of-range GT, or left unmatched
/// while its own area is out of range, is ignored rather than counted.
///
/// Reduction order: AP/AR at one IoU threshold is the mean over labels (in
/// ascending order) that have at least one GT in range; multi-threshold
/// values are then the mean over thresholds in ascending order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "adr/geometry.hpp"

namespace adr {

/// Keyed by image id; std::map keeps a deterministic image order.
using BoxSet = std::map<std::string, std::vector<BBox>>;
using GroundTruthSet = BoxSet;
using DetectionSet = BoxSet;

inline double precision(std::size_t tp, std::size_t fp) {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

inline double recall(std::size_t tp, std::size_t fn) {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

struct AreaRange {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double a) const { return a >= lo && a < hi; }
};

inline constexpr AreaRange kAreaAll{};
inline constexpr AreaRange kAreaSmall{0.0, 32.0 * 32.0};
inline constexpr AreaRange kAreaMedium{32.0 * 32.0, 96.0 * 96.0};
inline constexpr AreaRange kAreaLarge{96.0 * 96.0, std::numeric_limits<double>::infinity()};

enum class DetOutcome { tp, fp, ignored, discarded };

struct ImageMatch {
  std::vector<DetOutcome> outcome;  // aligned with the input detections
  std::vector<int> matched_gt;      // GT index or -1, aligned with the input detections
  std::vector<bool> gt_matched;     // aligned with the input GT
  std::vector<bool> gt_in_range;
};

/// Core matcher for one image. Detections/GT of other labels are skipped
/// (marked discarded / left unmatched) when `label` is given.
inline ImageMatch match_image(const std::vector<BBox>& gt, const std::vector<BBox>& det, double iou_thresh,
                              double conf_thresh, AreaRange range = kAreaAll,
                              std::size_t max_dets = std::numeric_limits<std::size_t>::max(),
                              std::optional<int> label = std::nullopt) {
  ImageMatch m;
  m.outcome.assign(det.size(), DetOutcome::discarded);
  m.matched_gt.assign(det.size(), -1);
  m.gt_matched.assign(gt.size(), false);
  m.gt_in_range.assign(gt.size(), false);
  for (std::size_t g = 0; g < gt.size(); ++g) m.gt_in_range[g] = range.contains(area(gt[g]));

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < det.size(); ++i) {
    if (label && det[i].label.value_or(0) != *label) continue;
    if (det[i].score.value_or(1.0) < conf_thresh) continue;
    order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return det[a].score.value_or(1.0) > det[b].score.value_or(1.0); });
  if (order.size() > max_dets) order.resize(max_dets);

  for (std::size_t di : order) {
    const BBox& d = det[di];
    int best = -1;
    for (int pass = 0; pass < 2 && best < 0; ++pass) {
      const bool want_in_range = pass == 0;
      double best_iou = -1.0;
      for (std::size_t g = 0; g < gt.size(); ++g) {
        if (m.gt_matched[g] || m.gt_in_range[g] != want_in_range) continue;
        if (gt[g].label.value_or(0) != d.label.value_or(0)) continue;
        const double v = iou(d, gt[g]);
        if (v >= iou_thresh && v > best_iou) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
    }
    if (best >= 0) {
      m.gt_matched[best] = true;
      m.matched_gt[di] = best;
      m.outcome[di] = m.gt_in_range[best] ? DetOutcome::tp : DetOutcome::ignored;
    } else {
      m.outcome[di] = range.contains(area(d)) ? DetOutcome::fp : DetOutcome::ignored;
    }
  }
  return m;
}

struct MatchCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct ClassifiedMatches {
  ImageMatch match;
  MatchCounts counts;
};

/// TP/FP/FN for one image with a confidence cut (detections below it are
/// discarded before matching).
inline ClassifiedMatches classify_matches(const std::vector<BBox>& gt, const std::vector<BBox>& det,
                                          double iou_thresh, double conf_thresh) {
  ClassifiedMatches c;
  c.match = match_image(gt, det, iou_thresh, conf_thresh);
  for (auto o : c.match.outcome) {
    c.counts.tp += o == DetOutcome::tp;
    c.counts.fp += o == DetOutcome::fp;
  }
  for (bool b : c.match.gt_matched) c.counts.fn += !b;
  return c;
}

inline MatchCounts classify_matches(const GroundTruthSet& gt, const DetectionSet& det, double iou_thresh,
                                    double conf_thresh) {
  MatchCounts total;
  static const std::vector<BBox> none;
  std::set<std::string> ids;
  for (const auto& [k, v] : gt) ids.insert(k);
  for (const auto& [k, v] : det) ids.insert(k);
  for (const auto& id : ids) {
    const auto gi = gt.find(id);
    const auto di = det.find(id);
    const auto c = classify_matches(gi == gt.end() ? none : gi->second, di == det.end() ? none : di->second,
                                    iou_thresh, conf_thresh);
    total.tp += c.counts.tp;
    total.fp += c.counts.fp;
    total.fn += c.counts.fn;
  }
  return total;
}

/// Scored TP/FP sweep for one label over a whole set.
struct Sweep {
  std::vector<double> scores;
  std::vector<char> is_tp;
  std::size_t num_gt = 0;
};

inline Sweep build_sweep(const GroundTruthSet& gt, const DetectionSet& det, int label, double iou_thresh,
                         AreaRange range, std::size_t max_dets) {
  Sweep s;
  static const std::vector<BBox> none;
  std::set<std::string> ids;
  for (const auto& [k, v] : gt) ids.insert(k);
  for (const auto& [k, v] : det) ids.insert(k);
  std::vector<std::pair<double, char>> entries;
  for (const auto& id : ids) {
    const auto gi = gt.find(id);
    const auto di = det.find(id);
    std::vector<BBox> g;
    for (const auto& b : gi == gt.end() ? none : gi->second)
      if (b.label.value_or(0) == label) g.push_back(b);
    const std::vector<BBox>& d = di == det.end() ? none : di->second;
    const ImageMatch m = match_image(g, d, iou_thresh, 0.0, range, max_dets, label);
    for (bool in_range : m.gt_in_range) s.num_gt += in_range;
    // Emit in the matcher's visiting order: descending score, stable.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (m.outcome[i] == DetOutcome::tp || m.outcome[i] == DetOutcome::fp) order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d[a].score.value_or(1.0) > d[b].score.value_or(1.0); });
    for (std::size_t i : order) entries.emplace_back(d[i].score.value_or(1.0), m.outcome[i] == DetOutcome::tp);
  }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [sc, tp] : entries) {
    s.scores.push_back(sc);
    s.is_tp.push_back(tp);
  }
  return s;
}

inline constexpr int kRecallPoints = 101;

/// 101-point interpolated AP; -1 when there is no GT.
inline double ap_from_sweep(const Sweep& s) {
  if (s.num_gt == 0) return -1.0;
  const std::size_t n = s.is_tp.size();
  std::vector<double> prec(n), rec(n);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (s.is_tp[i] ? tp : fp) += 1;
    prec[i] = precision(tp, fp);
    rec[i] = static_cast<double>(tp) / static_cast<double>(s.num_gt);
  }
  for (std::size_t i = n; i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double sum = 0.0;
  for (int r = 0; r < kRecallPoints; ++r) {
    const double level = static_cast<double>(r) / (kRecallPoints - 1);
    const auto it = std::lower_bound(rec.begin(), rec.end(), level);
    if (it != rec.end()) sum += prec[static_cast<std::size_t>(it - rec.begin())];
  }
  return sum / kRecallPoints;
}

/// Recall reached by the whole sweep; -1 when there is no GT.
inline double recall_from_sweep(const Sweep& s) {
  if (s.num_gt == 0) return -1.0;
  std::size_t tp = 0;
  for (char t : s.is_tp) tp += t != 0;
  return static_cast<double>(tp) / static_cast<double>(s.num_gt);
}

inline std::vector<int> labels_of(const GroundTruthSet& gt, const DetectionSet& det) {
  std::set<int> ls;
  for (const auto& [k, v] : gt)
    for (const auto& b : v) ls.insert(b.label.value_or(0));
  for (const auto& [k, v] : det)
    for (const auto& b : v) ls.insert(b.label.value_or(0));
  return {ls.begin(), ls.end()};
}

namespace detail {

/// Mean of entries that are not the -1 sentinel; -1 if none remain.
inline double mean_valid(const std::vector<double>& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (x > -1.0) {
      sum += x;
      ++n;
    }
  return n == 0 ? -1.0 : sum / static_cast<double>(n);
}

}  // namespace detail

inline constexpr std::size_t kMaxDetsDefault = 100;

/// AP at one IoU threshold, averaged over labels (mAP over classes).
inline double average_precision(const GroundTruthSet& gt, const DetectionSet& det, double iou_thresh,
                                AreaRange range = kAreaAll, std::size_t max_dets = kMaxDetsDefault) {
  std::vector<double> per_label;
  for (int l : labels_of(gt, det)) per_label.push_back(ap_from_sweep(build_sweep(gt, det, l, iou_thresh, range, max_dets)));
  return detail::mean_valid(per_label);
}

inline double average_recall_at(const GroundTruthSet& gt, const DetectionSet& det, double iou_thresh,
                                AreaRange range = kAreaAll, std::size_t max_dets = kMaxDetsDefault) {
  std::vector<double> per_label;
  for (int l : labels_of(gt, det))
    per_label.push_back(recall_from_sweep(build_sweep(gt, det, l, iou_thresh, range, max_dets)));
  return detail::mean_valid(per_label);
}

inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

struct EvalReport {
  enum Index {
    ap,
    ap50,
    ap75,
    ap_small,
    ap_medium,
    ap_large,
    ar1,
    ar10,
    ar100,
    ar_small,
    ar_medium,
    ar_large,
    kCount
  };
  std::array<double, kCount> values{};

  double operator[](Index i) const { return values[i]; }
};

struct ReportRow {
  bool is_ap;
  const char* iou;
  const char* area;
  int max_dets;
  const char* key;
};

inline const std::array<ReportRow, EvalReport::kCount>& report_rows() {
  static const std::array<ReportRow, EvalReport::kCount> rows{{
      {true, "0.50:0.95", "all", 100, "AP"},
      {true, "0.50", "all", 100, "AP50"},
      {true, "0.75", "all", 100, "AP75"},
      {true, "0.50:0.95", "small", 100, "AP_small"},
      {true, "0.50:0.95", "medium", 100, "AP_medium"},
      {true, "0.50:0.95", "large", 100, "AP_large"},
      {false, "0.50:0.95", "all", 1, "AR1"},
      {false, "0.50:0.95", "all", 10, "AR10"},
      {false, "0.50:0.95", "all", 100, "AR100"},
      {false, "0.50:0.95", "small", 100, "AR_small"},
      {false, "0.50:0.95", "medium", 100, "AR_medium"},
      {false, "0.50:0.95", "large", 100, "AR_large"},
  }};
  return rows;
}

inline EvalReport coco_summary(const GroundTruthSet& gt, const DetectionSet& det) {
  const auto thresholds = coco_iou_thresholds();
  const auto mean_over = [&](auto&& fn) {
    std::vector<double> v;
    for (double t : thresholds) v.push_back(fn(t));
    return detail::mean_valid(v);
  };
  EvalReport r;
  r.values[EvalReport::ap] = mean_over([&](double t) { return average_precision(gt, det, t, kAreaAll, 100); });
  r.values[EvalReport::ap50] = average_precision(gt, det, 0.5, kAreaAll, 100);
  r.values[EvalReport::ap75] = average_precision(gt, det, 0.75, kAreaAll, 100);
  r.values[EvalReport::ap_small] = mean_over([&](double t) { return average_precision(gt, det, t, kAreaSmall, 100); });
  r.values[EvalReport::ap_medium] =
      mean_over([&](double t) { return average_precision(gt, det, t, kAreaMedium, 100); });
  r.values[EvalReport::ap_large] = mean_over([&](double t) { return average_precision(gt, det, t, kAreaLarge, 100); });
  r.values[EvalReport::ar1] = mean_over([&](double t) { return average_recall_at(gt, det, t, kAreaAll, 1); });
  r.values[EvalReport::ar10] = mean_over([&](double t) { return average_recall_at(gt, det, t, kAreaAll, 10); });
  r.values[EvalReport::ar100] = mean_over([&](double t) { return average_recall_at(gt, det, t, kAreaAll, 100); });
  r.values[EvalReport::ar_small] = mean_over([&](double t) { return average_recall_at(gt, det, t, kAreaSmall, 100); });
  r.values[EvalReport::ar_medium] =
      mean_over([&](double t) { return average_recall_at(gt, det, t, kAreaMedium, 100); });
  r.values[EvalReport::ar_large] = mean_over([&](double t) { return average_recall_at(gt, det, t, kAreaLarge, 100); });
  return r;
}

/// One line per entry, COCO summary layout, e.g.
/// `Average Precision  (AP) @[ IoU=0.50:0.95 | area=   all | maxDets=100 ] = 0.580`
inline std::string render_report(const EvalReport& r) {
  std::string out;
  char buf[160];
  const auto& rows = report_rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    std::snprintf(buf, sizeof(buf), "%-18s %s @[ IoU=%-9s | area=%6s | maxDets=%3d ] = %0.3f\n",
                  row.is_ap ? "Average Precision" : "Average Recall", row.is_ap ? "(AP)" : "(AR)", row.iou, row.area,
                  row.max_dets, r.values[i]);
    out += buf;
  }
  return out;
}

}  // namespace adr
