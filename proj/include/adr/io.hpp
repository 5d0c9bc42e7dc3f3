// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file io.hpp
/// @brief Box-set files (ground truth or detections) in JSON and CSV.
///
/// JSON:
///   { "images": ["C0001/1", ...],
///     "boxes":  [ {"image_id": "C0001/1", "label": 0, "score": 0.93,
///                  "x_min": 10, "y_min": 12, "x_max": 30, "y_max": 25}, ... ] }
/// "images" lists every image, including those without boxes, and may be
/// omitted. "score" is required for detections and absent in ground truth.
/// A bare array is read as the "boxes" list.
///
/// CSV: header `image_id,label,score,x_min,y_min,x_max,y_max`. An empty
/// score cell means no score. A row with only image_id declares an image
/// without boxes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adr/eval.hpp"
#include "adr/geometry.hpp"

namespace adr {

class FormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline nlohmann::json box_json(const std::string& image_id, const BBox& b) {
  nlohmann::json j;
  j["image_id"] = image_id;
  j["label"] = b.label.value_or(0);
  if (b.score) j["score"] = *b.score;
  j["x_min"] = b.x_min;
  j["y_min"] = b.y_min;
  j["x_max"] = b.x_max;
  j["y_max"] = b.y_max;
  return j;
}

inline nlohmann::json boxset_json(const BoxSet& set) {
  nlohmann::json images = nlohmann::json::array();
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& [id, v] : set) {
    images.push_back(id);
    for (const auto& b : v) boxes.push_back(box_json(id, b));
  }
  nlohmann::json j;
  j["images"] = std::move(images);
  j["boxes"] = std::move(boxes);
  return j;
}

inline BoxSet boxset_from_json(const nlohmann::json& j, const std::string& what = "input") {
  BoxSet set;
  const nlohmann::json* boxes = &j;
  if (j.is_object()) {
    if (j.contains("images")) {
      if (!j["images"].is_array()) throw FormatError(what + ": 'images' must be an array");
      for (const auto& id : j["images"]) set[id.get<std::string>()];
    }
    if (!j.contains("boxes")) throw FormatError(what + ": missing 'boxes'");
    boxes = &j["boxes"];
  }
  if (!boxes->is_array()) throw FormatError(what + ": expected an array of boxes");
  std::size_t n = 0;
  for (const auto& e : *boxes) {
    const std::string where = what + ": box " + std::to_string(n++);
    try {
      BBox b(e.at("x_min").get<double>(), e.at("y_min").get<double>(), e.at("x_max").get<double>(),
             e.at("y_max").get<double>());
      b.label = e.contains("label") ? e["label"].get<int>() : 0;
      if (e.contains("score") && !e["score"].is_null()) b.score = e["score"].get<double>();
      if (!(b.x_max >= b.x_min && b.y_max >= b.y_min)) throw FormatError(where + ": inverted corners");
      set[e.at("image_id").get<std::string>()].push_back(b);
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(where + ": " + ex.what());
    }
  }
  return set;
}

inline std::string boxset_csv(const BoxSet& set) {
  std::string s = "image_id,label,score,x_min,y_min,x_max,y_max\n";
  char buf[256];
  for (const auto& [id, v] : set) {
    if (v.empty()) s += id + ",,,,,,\n";
    for (const auto& b : v) {
      std::string score;
      if (b.score) {
        std::snprintf(buf, sizeof(buf), "%.17g", *b.score);
        score = buf;
      }
      std::snprintf(buf, sizeof(buf), ",%d,%s,%.17g,%.17g,%.17g,%.17g\n", b.label.value_or(0), score.c_str(), b.x_min,
                    b.y_min, b.x_max, b.y_max);
      s += id + buf;
    }
  }
  return s;
}

inline BoxSet boxset_from_csv(std::istream& in, const std::string& what = "input") {
  BoxSet set;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(what + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image_id,label,score,x_min,y_min,x_max,y_max")
    throw FormatError(what + ": unexpected CSV header '" + line + "'");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    const std::string where = what + ":" + std::to_string(lineno);
    if (cells.size() != 7) throw FormatError(where + ": expected 7 columns");
    auto& v = set[cells[0]];
    bool all_empty = true;
    for (std::size_t i = 1; i < 7; ++i) all_empty = all_empty && cells[i].empty();
    if (all_empty) continue;
    try {
      std::size_t used = 0;
      auto num = [&](const std::string& c) {
        const double d = std::stod(c, &used);
        if (used != c.size()) throw std::invalid_argument("trailing characters");
        return d;
      };
      BBox b(num(cells[3]), num(cells[4]), num(cells[5]), num(cells[6]));
      b.label = cells[1].empty() ? 0 : static_cast<int>(num(cells[1]));
      if (!cells[2].empty()) b.score = num(cells[2]);
      if (!(b.x_max >= b.x_min && b.y_max >= b.y_min)) throw FormatError(where + ": inverted corners");
      v.push_back(b);
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return set;
}

/// Reads .json or .csv by extension.
inline BoxSet read_boxset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  const std::string ext = path.extension().string();
  if (ext == ".csv") return boxset_from_csv(in, path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return boxset_from_json(j, path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream o(path, std::ios::binary);
  if (!o) throw std::runtime_error("cannot write " + path.string());
  o << text;
}

inline void write_boxset(const std::filesystem::path& path, const BoxSet& set) {
  write_text(path, path.extension() == ".csv" ? boxset_csv(set) : boxset_json(set).dump(2) + "\n");
}

/// Every scored box must carry a score; ground truth must not need one.
inline void require_scores(const DetectionSet& det, const std::string& what) {
  for (const auto& [id, v] : det)
    for (const auto& b : v)
      if (!b.score) throw FormatError(what + ": detection in '" + id + "' has no score");
}

}  // namespace adr
