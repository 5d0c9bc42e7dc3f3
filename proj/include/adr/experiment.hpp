// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file experiment.hpp
/// @brief ExperimentConfig: every training knob, with a key = value text form.
///
/// Text format: one `key = value` per line, `#` starts a comment, blank lines
/// are ignored, unknown keys are an error. Lists are comma separated.
/// to_text() writes every key in a fixed order with round-trip precision, so
/// parse(to_text(c)) == c.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adr/anchors.hpp"
#include "adr/data.hpp"
#include "adr/detector.hpp"
#include "adr/losses.hpp"
#include "adr/optim.hpp"

namespace adr {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  // network
  int input_size = 640;
  int stem_width = 16;
  std::vector<int> stage_widths{16, 32, 64};
  int fpn_width = 256;
  int head_depth = 2;
  int max_level = 5;
  int num_classes = 1;
  // anchors and matching
  double anchor_scale = 2.0;
  std::vector<double> aspect_ratios{0.5, 0.75, 1.0, 1.25, 1.5};
  double match_positive = 0.5;
  double match_negative = 0.4;
  // data
  double test_fraction = 0.25;
  bool split_by_series = false;
  std::string augment = "HFlip";
  // loss
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double box_beta = 0.11;
  // optimizer and schedule
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global max-norm; 0 disables
  ScheduleKind schedule = ScheduleKind::cosine;
  double lr = 0.01;
  double lr_gamma = 0.5;
  double lr_step = 10;
  double lr_horizon = 0;  // epochs; 0 = the whole run
  long warmup_steps = 2500;
  // loop
  int batch_size = 4;
  long iterations = 40000;
  long eval_every = 500;
  std::uint64_t seed = 0;
  // inference
  double score_threshold = 0.5;
  double eval_score_threshold = 0.05;
  double nms_iou = 0.5;
  int max_detections = 100;
  int pre_nms_top_k = 1000;

  bool operator==(const ExperimentConfig&) const = default;

  DetectorConfig detector() const {
    DetectorConfig d;
    d.input_size = input_size;
    d.stem_width = stem_width;
    d.stage_widths = stage_widths;
    d.fpn_width = fpn_width;
    d.head_depth = head_depth;
    d.max_level = max_level;
    d.num_classes = num_classes;
    d.anchors_per_location = static_cast<int>(anchor_spec().anchors_per_location());
    d.seed = seed;
    return d;
  }

  AnchorSpec anchor_spec() const {
    AnchorSpec s;
    s.levels.clear();
    for (int l = DetectorConfig::kMinLevel; l <= max_level; ++l) s.levels.push_back(l);
    s.aspect_ratios = aspect_ratios;
    s.global_scale = anchor_scale;
    return s;
  }

  FocalParams focal() const { return {focal_alpha, focal_gamma}; }

  OptimizerHyper hyper() const { return {momentum, beta1, beta2, eps}; }

  AugmentPolicy augment_policy() const { return AugmentPolicy::preset(augment); }

  /// Schedule with the horizon resolved against a run of `epochs` epochs.
  ScheduleSpec schedule_spec(double epochs) const {
    ScheduleSpec s;
    s.kind = schedule;
    s.alpha0 = lr;
    s.gamma = lr_gamma;
    s.step_width = lr_step;
    s.horizon = lr_horizon > 0 ? lr_horizon : std::max(1.0, epochs);
    s.warmup_steps = warmup_steps;
    return s;
  }

  void validate() const {
    detector().validate();
    anchor_spec().validate();
    focal().validate();
    schedule_spec(1).validate();
    if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test_fraction must lie in (0,1)");
    if (match_positive < match_negative) throw ConfigError("match_positive must be >= match_negative");
    if (!(box_beta > 0)) throw ConfigError("box_beta must be positive");
    if (batch_size < 1 || iterations < 0 || eval_every < 0) throw ConfigError("bad loop sizes");
    if (max_detections < 1 || pre_nms_top_k < 1) throw ConfigError("detection caps must be >= 1");
    if (grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
    (void)augment_policy();
    Optimizer<float>(optimizer, hyper());
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>) {
      s += fmt_double(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F conv) {
  std::vector<T> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(conv(trim(item)));
  return out;
}

/// Key table: name -> (getter as text, setter from text). Declaration order
/// is the serialization order.
struct ConfigField {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline const std::vector<ConfigField>& config_fields() {
  using C = ExperimentConfig;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
#define ADR_INT(name)                                                                         \
  f.push_back({#name, [](const C& c) { return std::to_string(c.name); },                      \
               [](C& c, const std::string& v) { c.name = static_cast<decltype(c.name)>(to_long(#name, v)); }})
#define ADR_DBL(name)                                                               \
  f.push_back({#name, [](const C& c) { return fmt_double(c.name); },                \
               [](C& c, const std::string& v) { c.name = to_double(#name, v); }})
    ADR_INT(input_size);
    ADR_INT(stem_width);
    f.push_back({"stage_widths", [](const C& c) { return join(c.stage_widths); }, [](C& c, const std::string& v) {
                   c.stage_widths = to_list<int>(v, [](const std::string& s) { return static_cast<int>(to_long("stage_widths", s)); });
                 }});
    ADR_INT(fpn_width);
    ADR_INT(head_depth);
    ADR_INT(max_level);
    ADR_INT(num_classes);
    ADR_DBL(anchor_scale);
    f.push_back({"aspect_ratios", [](const C& c) { return join(c.aspect_ratios); }, [](C& c, const std::string& v) {
                   c.aspect_ratios = to_list<double>(v, [](const std::string& s) { return to_double("aspect_ratios", s); });
                 }});
    ADR_DBL(match_positive);
    ADR_DBL(match_negative);
    ADR_DBL(test_fraction);
    f.push_back({"split_by_series", [](const C& c) { return std::string(c.split_by_series ? "true" : "false"); },
                 [](C& c, const std::string& v) { c.split_by_series = to_bool("split_by_series", v); }});
    f.push_back({"augment", [](const C& c) { return c.augment; }, [](C& c, const std::string& v) { c.augment = v; }});
    ADR_DBL(focal_alpha);
    ADR_DBL(focal_gamma);
    ADR_DBL(box_beta);
    f.push_back({"optimizer", [](const C& c) { return std::string(to_string(c.optimizer)); },
                 [](C& c, const std::string& v) { c.optimizer = parse_optimizer_kind(v); }});
    ADR_DBL(momentum);
    ADR_DBL(beta1);
    ADR_DBL(beta2);
    ADR_DBL(eps);
    ADR_DBL(grad_clip);
    f.push_back({"schedule", [](const C& c) { return std::string(to_string(c.schedule)); },
                 [](C& c, const std::string& v) { c.schedule = parse_schedule_kind(v); }});
    ADR_DBL(lr);
    ADR_DBL(lr_gamma);
    ADR_DBL(lr_step);
    ADR_DBL(lr_horizon);
    ADR_INT(warmup_steps);
    ADR_INT(batch_size);
    ADR_INT(iterations);
    ADR_INT(eval_every);
    f.push_back({"seed", [](const C& c) { return std::to_string(c.seed); },
                 [](C& c, const std::string& v) { c.seed = to_u64("seed", v); }});
    ADR_DBL(score_threshold);
    ADR_DBL(eval_score_threshold);
    ADR_DBL(nms_iou);
    ADR_INT(max_detections);
    ADR_INT(pre_nms_top_k);
#undef ADR_INT
#undef ADR_DBL
    return f;
  }();
  return fields;
}

}  // namespace detail

/// Sets one key from its text value; unknown keys throw ConfigError.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields()) {
    if (key == f.key) {
      try {
        f.set(c, value);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& f : detail::config_fields()) k.emplace_back(f.key);
  return k;
}

inline std::string to_text(const ExperimentConfig& c) {
  std::string s;
  for (const auto& f : detail::config_fields()) s += std::string(f.key) + " = " + f.get(c) + "\n";
  return s;
}

inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

/// Baseline preset: cosine decay, 2500-iteration warm-up, HFlip, 25% test
/// split, anchor scale 2.0, SGD, 640 input.
inline ExperimentConfig baseline_config() { return ExperimentConfig{}; }

/// Small CPU-trainable preset on 64x64 synthetic scenes.
inline ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.input_size = 64;
  c.fpn_width = 32;
  c.anchor_scale = 0.5;
  c.test_fraction = 0.2;
  c.optimizer = OptimizerKind::adam;
  c.lr = 1e-3;
  c.warmup_steps = 200;
  c.iterations = 3000;
  c.batch_size = 4;
  c.grad_clip = 10.0;
  return c;
}

}  // namespace adr
