// SPDX-License-Identifier: Apache-2.0
#pragma once

// Brute-force COCO-style evaluator written independently of adr::eval.
// Direct restatement of the rules: greedy per-image matching in score order,
// then for every recall level the best precision among all score cut-offs
// reaching that recall (O(n^2), no envelope pass, no binary search).

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "adr/geometry.hpp"

namespace adr::testing {

struct OracleBox {
  double x0, y0, x1, y1;
  int label;
  double score;
};

using OracleSet = std::map<std::string, std::vector<OracleBox>>;

inline double oracle_area(const OracleBox& b) { return (b.x1 - b.x0) * (b.y1 - b.y0); }

inline double oracle_iou(const OracleBox& a, const OracleBox& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double u = oracle_area(a) + oracle_area(b) - inter;
  return u > 0 ? inter / u : 0.0;
}

struct OracleResult {
  std::vector<std::pair<double, bool>> scored;  // (score, is_tp) for counted detections
  std::size_t num_gt = 0;
};

inline OracleResult oracle_collect(const OracleSet& gt, const OracleSet& det, int label, double t, double lo, double hi,
                                   std::size_t max_dets) {
  OracleResult r;
  std::set<std::string> ids;
  for (const auto& kv : gt) ids.insert(kv.first);
  for (const auto& kv : det) ids.insert(kv.first);
  for (const auto& id : ids) {
    std::vector<OracleBox> g, d;
    if (gt.count(id))
      for (const auto& b : gt.at(id))
        if (b.label == label) g.push_back(b);
    if (det.count(id))
      for (const auto& b : det.at(id))
        if (b.label == label) d.push_back(b);
    std::stable_sort(d.begin(), d.end(), [](const OracleBox& a, const OracleBox& b) { return a.score > b.score; });
    if (d.size() > max_dets) d.resize(max_dets);
    std::vector<bool> in(g.size()), used(g.size(), false);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double a = oracle_area(g[i]);
      in[i] = a >= lo && a < hi;
      r.num_gt += in[i];
    }
    for (const auto& db : d) {
      // Candidate key: in-range first, then larger IoU, then lower index.
      bool found = false;
      std::tuple<int, double, int> best{};
      std::size_t best_i = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (used[i]) continue;
        const double v = oracle_iou(db, g[i]);
        if (v < t) continue;
        const std::tuple<int, double, int> key{in[i] ? 1 : 0, v, -static_cast<int>(i)};
        if (!found || key > best) {
          best = key;
          best_i = i;
          found = true;
        }
      }
      if (found) {
        used[best_i] = true;
        if (in[best_i]) r.scored.emplace_back(db.score, true);
      } else {
        const double a = oracle_area(db);
        if (a >= lo && a < hi) r.scored.emplace_back(db.score, false);
      }
    }
  }
  std::stable_sort(r.scored.begin(), r.scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  return r;
}

inline double oracle_ap(const OracleResult& r) {
  if (r.num_gt == 0) return -1.0;
  double sum = 0;
  for (int level = 0; level <= 100; ++level) {
    const double need = static_cast<double>(level) / 100.0;
    double best = 0.0;
    std::size_t tp = 0, fp = 0;
    for (const auto& [score, is_tp] : r.scored) {
      (is_tp ? tp : fp) += 1;
      const double rec = static_cast<double>(tp) / static_cast<double>(r.num_gt);
      const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
      if (rec >= need) best = std::max(best, prec);
    }
    sum += best;
  }
  return sum / 101.0;
}

inline double oracle_ar(const OracleResult& r) {
  if (r.num_gt == 0) return -1.0;
  std::size_t tp = 0;
  for (const auto& e : r.scored) tp += e.second;
  return static_cast<double>(tp) / static_cast<double>(r.num_gt);
}

inline double oracle_mean(const std::vector<double>& v) {
  double s = 0;
  int n = 0;
  for (double x : v)
    if (x != -1.0) {
      s += x;
      ++n;
    }
  return n ? s / n : -1.0;
}

/// The 12 entries in summary order.
inline std::array<double, 12> oracle_summary(const OracleSet& gt, const OracleSet& det) {
  std::set<int> label_set;
  for (const auto* s : {&gt, &det})
    for (const auto& kv : *s)
      for (const auto& b : kv.second) label_set.insert(b.label);
  const double inf = std::numeric_limits<double>::infinity();
  const auto metric = [&](bool ap, double t, double lo, double hi, std::size_t md) {
    std::vector<double> per;
    for (int l : label_set) {
      const auto r = oracle_collect(gt, det, l, t, lo, hi, md);
      per.push_back(ap ? oracle_ap(r) : oracle_ar(r));
    }
    return oracle_mean(per);
  };
  const auto over_t = [&](bool ap, double lo, double hi, std::size_t md) {
    std::vector<double> v;
    for (int i = 0; i < 10; ++i) v.push_back(metric(ap, 0.5 + 0.05 * i, lo, hi, md));
    return oracle_mean(v);
  };
  return {over_t(true, 0, inf, 100),       metric(true, 0.5, 0, inf, 100),  metric(true, 0.75, 0, inf, 100),
          over_t(true, 0, 1024, 100),      over_t(true, 1024, 9216, 100),   over_t(true, 9216, inf, 100),
          over_t(false, 0, inf, 1),        over_t(false, 0, inf, 10),       over_t(false, 0, inf, 100),
          over_t(false, 0, 1024, 100),     over_t(false, 1024, 9216, 100),  over_t(false, 9216, inf, 100)};
}

inline OracleSet to_oracle(const std::map<std::string, std::vector<BBox>>& s) {
  OracleSet o;
  for (const auto& [id, v] : s) {
    auto& dst = o[id];
    for (const auto& b : v) dst.push_back({b.x_min, b.y_min, b.x_max, b.y_max, b.label.value_or(0), b.score.value_or(1.0)});
  }
  return o;
}

}  // namespace adr::testing
