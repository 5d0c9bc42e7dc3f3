// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file cli.hpp
/// @brief The `adr` command line: synth, stats, anchors, lr-curve, train,
/// eval, infer and replay.
///
/// Exit codes: 0 success, 1 user error (bad flags, unreadable or malformed
/// input), 2 internal failure (numerical blow-up, broken invariant).
/// Every command writes a manifest JSON beside its outputs recording argv,
/// the resolved option values, the tool version and the compiler. `replay
/// --manifest M` re-executes the recorded argv.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "adr/anchors.hpp"
#include "adr/checkpoint.hpp"
#include "adr/data.hpp"
#include "adr/eval.hpp"
#include "adr/experiment.hpp"
#include "adr/io.hpp"
#include "adr/optim.hpp"
#include "adr/svg.hpp"
#include "adr/synth.hpp"
#include "adr/trainer.hpp"
#include "adr/version.hpp"

namespace adr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json option_values(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help") continue;
    const auto& res = opt->results();
    if (res.empty()) {
      j[name] = opt->get_default_str();
    } else if (res.size() == 1) {
      j[name] = res.front();
    } else {
      j[name] = res;
    }
  }
  return j;
}

inline void write_manifest(const fs::path& path, const std::vector<std::string>& argv, const CLI::App& sub,
                           const json& extra = json::object()) {
  json m;
  m["tool"] = "adr";
  m["version"] = kVersion;
  m["compiler"] = __VERSION__;
  m["command"] = sub.get_name();
  m["argv"] = argv;
  m["options"] = option_values(sub);
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_text(path, m.dump(2) + "\n");
}

/// Manifest path beside a file output: out.csv -> out.csv.manifest.json.
inline fs::path manifest_beside(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

inline std::string histogram_csv(const Histogram& h, const char* label) {
  std::string s = std::string(label) + "_lo," + label + "_hi,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) s += num(h.edges[i]) + "," + num(h.edges[i + 1]) + "," + std::to_string(h.counts[i]) + "\n";
  return s;
}

inline json summary_json(const FiveNumberSummary& f) {
  return {{"count", f.count},           {"min", f.min},
          {"q1", f.q1},                 {"median", f.median},
          {"q3", f.q3},                 {"max", f.max},
          {"whisker_low", f.whisker_low}, {"whisker_high", f.whisker_high},
          {"outliers", f.outliers.size()}};
}

inline std::vector<std::string> bin_labels(const Histogram& h) {
  std::vector<std::string> l;
  for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g-%g", h.edges[i], h.edges[i + 1]);
    l.emplace_back(buf);
  }
  return l;
}

inline std::vector<double> as_double(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

inline std::vector<Sample> subset_samples(const ExperimentConfig& cfg, const fs::path& data, const std::string& subset) {
  const auto ds = load_gdxray(data);
  if (ds.records.empty()) throw UserError("no images found under " + data.string());
  if (subset == "all") return load_samples(ds.records);
  const auto parts = split(ds.records, cfg.test_fraction, cfg.seed, cfg.split_by_series);
  return load_samples(subset == "train" ? parts.train : parts.test);
}

}  // namespace detail

/// Runs one command. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"adr: radiograph defect detection toolkit"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  // synth
  auto* synth = app.add_subcommand("synth", "write a seeded synthetic dataset in the GDXray layout");
  std::string synth_out;
  int synth_count = 250, synth_series = 100;
  std::uint64_t synth_seed = 0;
  std::string synth_preset = "default", synth_format = "pgm";
  SceneParams sp;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", synth_count, "number of scenes")->capture_default_str()->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_seed, "dataset seed")->capture_default_str();
  synth->add_option("--preset", synth_preset, "default or imbalanced")
      ->capture_default_str()
      ->check(CLI::IsMember({"default", "imbalanced"}));
  synth->add_option("--series-size", synth_series, "images per series directory")->capture_default_str();
  synth->add_option("--format", synth_format, "pgm or png")->capture_default_str()->check(CLI::IsMember({"pgm", "png"}));
  std::optional<int> s_width, s_height, s_cmin, s_cmax;
  std::optional<double> s_smin, s_smax, s_noise;
  synth->add_option("--width", s_width, "scene width");
  synth->add_option("--height", s_height, "scene height");
  synth->add_option("--count-min", s_cmin, "minimum defects per scene");
  synth->add_option("--count-max", s_cmax, "maximum defects per scene");
  synth->add_option("--size-min", s_smin, "minimum defect extent, px");
  synth->add_option("--size-max", s_smax, "maximum defect extent, px");
  synth->add_option("--noise", s_noise, "Gaussian noise sigma");

  // stats
  auto* stats = app.add_subcommand("stats", "dataset statistics: histograms, heatmap, summaries");
  std::string stats_data, stats_out;
  int stats_grid = 32;
  stats->add_option("--data", stats_data, "dataset root")->required();
  stats->add_option("--out", stats_out, "output directory")->required();
  stats->add_option("--heatmap-size", stats_grid, "heatmap grid side")->capture_default_str()->check(CLI::PositiveNumber);

  // anchors
  auto* anchors = app.add_subcommand("anchors", "dump the anchor grid as CSV (level,cx,cy,w,h)");
  int anc_size = 640, anc_max_level = 5;
  double anc_scale = 2.0;
  std::string anc_out;
  anchors->add_option("--size", anc_size, "square input size")->capture_default_str();
  anchors->add_option("--scale", anc_scale, "anchor global scale")->capture_default_str();
  anchors->add_option("--max-level", anc_max_level, "top pyramid level (5..7)")->capture_default_str();
  anchors->add_option("--out", anc_out, "output CSV")->required();

  // lr-curve
  auto* lrc = app.add_subcommand("lr-curve", "learning-rate schedule as CSV (epoch,lr) and SVG");
  std::string lr_kind = "cosine", lr_out, lr_svg;
  double lr_alpha0 = 0.01, lr_gamma = 0.5, lr_step = 10;
  std::optional<double> lr_horizon;
  int lr_epochs = 100;
  long lr_warmup = 0, lr_ipe = 1;
  lrc->add_option("--kind", lr_kind, "constant, step, time, exponential or cosine")->capture_default_str();
  lrc->add_option("--alpha0", lr_alpha0, "initial learning rate")->capture_default_str();
  lrc->add_option("--gamma", lr_gamma, "decay factor")->capture_default_str();
  lrc->add_option("--step-width", lr_step, "epochs per step-decay drop")->capture_default_str();
  lrc->add_option("--epochs", lr_epochs, "last epoch to tabulate")->capture_default_str()->check(CLI::PositiveNumber);
  lrc->add_option("--horizon", lr_horizon, "cosine horizon in epochs (default: --epochs)");
  lrc->add_option("--warmup", lr_warmup, "warm-up iterations")->capture_default_str();
  lrc->add_option("--iters-per-epoch", lr_ipe, "iterations per epoch, for warm-up")->capture_default_str();
  lrc->add_option("--out", lr_out, "output CSV")->required();
  lrc->add_option("--svg", lr_svg, "output SVG (default: CSV path with .svg)");

  // train
  auto* trn = app.add_subcommand("train", "train a detector; writes checkpoint, logs and plots");
  std::string trn_config, trn_data, trn_out, trn_preset = "baseline";
  std::vector<std::string> trn_set;
  bool trn_quiet = false;
  trn->add_option("--config", trn_config, "key = value config file (applied over the preset)");
  trn->add_option("--preset", trn_preset, "baseline or desk")->capture_default_str()->check(CLI::IsMember({"baseline", "desk"}));
  trn->add_option("--set", trn_set, "override one key, key=value (repeatable)");
  trn->add_option("--data", trn_data, "dataset root")->required();
  trn->add_option("--out", trn_out, "output directory")->required();
  trn->add_flag("--quiet", trn_quiet, "no progress output");

  // eval
  auto* evl = app.add_subcommand("eval", "COCO-style report from files or from a checkpoint");
  std::string ev_gt, ev_det, ev_ckpt, ev_data, ev_out, ev_subset = "test";
  evl->add_option("--gt", ev_gt, "ground-truth JSON or CSV");
  evl->add_option("--det", ev_det, "detections JSON or CSV");
  evl->add_option("--checkpoint", ev_ckpt, "checkpoint to run on --data");
  evl->add_option("--data", ev_data, "dataset root (with --checkpoint)");
  evl->add_option("--subset", ev_subset, "test, train or all")->capture_default_str()->check(CLI::IsMember({"test", "train", "all"}));
  evl->add_option("--out", ev_out, "output directory for report.txt / report.json");

  // infer
  auto* inf = app.add_subcommand("infer", "run a checkpoint on images");
  std::string inf_ckpt, inf_out;
  std::vector<std::string> inf_images;
  std::optional<double> inf_thresh;
  inf->add_option("--checkpoint", inf_ckpt, "checkpoint file")->required();
  inf->add_option("--image", inf_images, "image file or directory (repeatable)")->required();
  inf->add_option("--threshold", inf_thresh, "score threshold (default from the checkpoint)");
  inf->add_option("--out", inf_out, "detections JSON or CSV")->required();

  // replay
  auto* rep = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  std::string rep_manifest;
  rep->add_option("--manifest", rep_manifest, "manifest JSON")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      SceneParams p = synth_preset == "imbalanced" ? imbalanced_scene_params() : SceneParams{};
      if (s_width) p.width = *s_width;
      if (s_height) p.height = *s_height;
      if (s_cmin) p.count_min = *s_cmin;
      if (s_cmax) p.count_max = *s_cmax;
      if (s_smin) p.size_min = *s_smin;
      if (s_smax) p.size_max = *s_smax;
      if (s_noise) p.noise = *s_noise;
      p.seed = synth_seed;
      p.validate();
      write_synthetic_dataset(synth_out, synth_count, p, synth_series, "." + synth_format);
      detail::write_manifest(fs::path(synth_out) / "manifest.json", args, *synth);
      out << "wrote " << synth_count << " scenes to " << synth_out << "\n";
      return 0;
    }

    if (stats->parsed()) {
      const auto ds = load_gdxray(stats_data);
      const auto st = dataset_stats(ds.records, stats_grid);
      const fs::path o = stats_out;
      json j;
      j["images"] = st.images;
      j["labeled_images"] = ds.labeled_count();
      j["boxes"] = st.boxes;
      j["degenerate_boxes"] = st.degenerate;
      j["diagnostics"] = ds.diagnostics.size();
      j["area"] = detail::summary_json(st.area_summary);
      j["aspect_ratio"] = detail::summary_json(st.ratio_summary);
      j["size_class_counts"] = {{"small", st.size_class.counts[0]},
                                {"medium", st.size_class.counts[1]},
                                {"large", st.size_class.counts[2]}};
      j["modal_size_class"] = std::array<const char*, 3>{"small", "medium", "large"}[st.size_class.mode()];
      j["modal_aspect_bin"] = {st.ratio.edges[st.ratio.mode()], st.ratio.edges[st.ratio.mode() + 1]};
      write_text(o / "stats.json", j.dump(2) + "\n");
      write_text(o / "side_hist.csv", detail::histogram_csv(st.side, "side"));
      write_text(o / "ratio_hist.csv", detail::histogram_csv(st.ratio, "ratio"));
      write_text(o / "size_class.csv", detail::histogram_csv(st.size_class, "area"));
      std::string heat = "gx,gy,count\n";
      for (int y = 0; y < st.heatmap_size; ++y)
        for (int x = 0; x < st.heatmap_size; ++x)
          heat += std::to_string(x) + "," + std::to_string(y) + "," + std::to_string(st.heat(x, y)) + "\n";
      write_text(o / "heatmap.csv", heat);
      std::string diags = "file,line,message\n";
      for (const auto& d : ds.diagnostics) diags += d.file.string() + "," + std::to_string(d.line) + "," + d.message + "\n";
      write_text(o / "diagnostics.csv", diags);
      write_text(o / "side_hist.svg",
                 svg::bar_chart("Box side sqrt(area), px", detail::bin_labels(st.side), detail::as_double(st.side.counts)));
      write_text(o / "ratio_hist.svg",
                 svg::bar_chart("Aspect ratio w/h", detail::bin_labels(st.ratio), detail::as_double(st.ratio.counts)));
      write_text(o / "heatmap.svg", svg::heatmap("Box centers", detail::as_double(st.heatmap), st.heatmap_size));
      detail::write_manifest(o / "manifest.json", args, *stats);
      out << st.images << " images, " << ds.labeled_count() << " labeled, " << st.boxes << " boxes, "
          << ds.diagnostics.size() << " diagnostics\n";
      return 0;
    }

    if (anchors->parsed()) {
      AnchorSpec spec;
      spec.levels.clear();
      for (int l = DetectorConfig::kMinLevel; l <= anc_max_level; ++l) spec.levels.push_back(l);
      spec.global_scale = anc_scale;
      const auto grid = generate_anchors(spec, anc_size);
      std::string csv = "level,cx,cy,w,h\n";
      for (const auto& lv : grid.levels)
        for (const auto& a : lv.anchors)
          csv += std::to_string(lv.level) + "," + detail::num(a.cx()) + "," + detail::num(a.cy()) + "," +
                 detail::num(a.width()) + "," + detail::num(a.height()) + "\n";
      write_text(anc_out, csv);
      detail::write_manifest(detail::manifest_beside(anc_out), args, *anchors, {{"total_anchors", grid.total()}});
      out << grid.total() << " anchors\n";
      return 0;
    }

    if (lrc->parsed()) {
      ScheduleSpec spec;
      spec.kind = parse_schedule_kind(lr_kind);
      spec.alpha0 = lr_alpha0;
      spec.gamma = lr_gamma;
      spec.step_width = lr_step;
      spec.horizon = lr_horizon.value_or(lr_epochs);
      spec.warmup_steps = lr_warmup;
      spec.validate();
      if (lr_ipe < 1) throw UserError("--iters-per-epoch must be >= 1");
      std::string csv = "epoch,lr\n";
      std::vector<double> xs, ys;
      for (int n = 0; n <= lr_epochs; ++n) {
        const double lr = lr_at(spec, n, static_cast<long>(n) * lr_ipe);
        csv += std::to_string(n) + "," + detail::num(lr) + "\n";
        xs.push_back(n);
        ys.push_back(lr);
      }
      write_text(lr_out, csv);
      const fs::path svg_path = lr_svg.empty() ? fs::path(lr_out).replace_extension(".svg") : fs::path(lr_svg);
      write_text(svg_path, svg::line_plot("Learning rate (" + lr_kind + ")", xs, ys));
      detail::write_manifest(detail::manifest_beside(lr_out), args, *lrc);
      return 0;
    }

    if (trn->parsed()) {
      ExperimentConfig cfg = trn_preset == "desk" ? desk_config() : baseline_config();
      if (!trn_config.empty()) cfg = load_config(trn_config, cfg);
      for (const auto& kv : trn_set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UserError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      cfg.validate();
      const auto ds = load_gdxray(trn_data);
      if (ds.records.empty()) throw UserError("no images found under " + trn_data);
      const auto parts = split(ds.records, cfg.test_fraction, cfg.seed, cfg.split_by_series);
      const auto train_samples = load_samples(parts.train);
      const auto test_samples = load_samples(parts.test);
      TrainHooks hooks;
      if (!trn_quiet) {
        hooks.on_iteration = [&](const IterationRecord& r) {
          if (r.iteration % 100 == 0)
            err << "iter " << r.iteration << " lr " << r.lr << " loss " << r.loss << " (cls " << r.cls_loss << ", box "
                << r.box_loss << ")\n";
        };
        hooks.on_eval = [&](const EvalRecord& e) {
          err << "eval @" << e.iteration << " AP50 " << e.report[EvalReport::ap50] << " AP " << e.report[EvalReport::ap]
              << "\n";
        };
      }
      auto result = train(cfg, train_samples, test_samples, hooks);
      const fs::path o = trn_out;
      fs::create_directories(o);
      save_checkpoint(o / "checkpoint.adr", cfg, result.net);
      write_text(o / "config.txt", to_text(cfg));
      write_text(o / "train_log.csv", result.log.to_csv());
      write_text(o / "eval_log.json", result.log.evals_json().dump(2) + "\n");
      json split_ids;
      for (const auto& r : parts.train) split_ids["train"].push_back(r.id());
      for (const auto& r : parts.test) split_ids["test"].push_back(r.id());
      write_text(o / "split.json", split_ids.dump(2) + "\n");
      std::vector<double> xs, ys;
      for (const auto& r : result.log.iterations) {
        xs.push_back(static_cast<double>(r.iteration));
        ys.push_back(r.loss);
      }
      write_text(o / "loss.svg", svg::line_plot("Training loss", xs, ys));
      detail::write_manifest(o / "manifest.json", args, *trn, {{"resolved_config", to_text(cfg)}, {"seed", cfg.seed}});
      if (!result.log.evals.empty()) {
        const auto& last = result.log.evals.back().report;
        out << "final AP50 " << detail::num(last[EvalReport::ap50]) << " AP " << detail::num(last[EvalReport::ap]) << "\n";
      }
      return 0;
    }

    if (evl->parsed()) {
      GroundTruthSet gt;
      DetectionSet det;
      const bool files = !ev_gt.empty() || !ev_det.empty();
      if (files == !ev_ckpt.empty()) throw UserError("eval needs either --gt and --det, or --checkpoint and --data");
      if (files) {
        if (ev_gt.empty() || ev_det.empty()) throw UserError("eval needs both --gt and --det");
        gt = read_boxset(ev_gt);
        det = read_boxset(ev_det);
        require_scores(det, ev_det);
      } else {
        if (ev_data.empty()) throw UserError("--checkpoint requires --data");
        const auto model = load_checkpoint<float>(ev_ckpt);
        const auto samples = detail::subset_samples(model.config, ev_data, ev_subset);
        const auto grid = generate_anchors(model.config.anchor_spec(), model.config.input_size).flat();
        gt = ground_truth_set(samples);
        det = predict_set(model.net, grid, samples, inference_options(model.config, true));
      }
      const EvalReport report = coco_summary(gt, det);
      const std::string text = render_report(report);
      out << text;
      if (!ev_out.empty()) {
        const fs::path o = ev_out;
        write_text(o / "report.txt", text);
        write_text(o / "report.json", TrainLog::report_json(report).dump(2) + "\n");
        if (!files) write_boxset(o / "detections.json", det);
        detail::write_manifest(o / "manifest.json", args, *evl);
      }
      return 0;
    }

    if (inf->parsed()) {
      const auto model = load_checkpoint<float>(inf_ckpt);
      InferenceOptions opt = inference_options(model.config, false);
      if (inf_thresh) opt.score_threshold = *inf_thresh;
      const auto grid = generate_anchors(model.config.anchor_spec(), model.config.input_size).flat();
      std::vector<fs::path> files;
      for (const auto& p : inf_images) {
        if (fs::is_directory(p)) {
          std::vector<fs::path> found;
          for (const auto& e : fs::recursive_directory_iterator(p))
            if (e.is_regular_file() && is_image_file(e.path())) found.push_back(e.path());
          std::sort(found.begin(), found.end());
          files.insert(files.end(), found.begin(), found.end());
        } else {
          files.emplace_back(p);
        }
      }
      DetectionSet det;
      for (const auto& f : files) det[f.string()] = infer(model.net, grid, read_image(f), opt);
      write_boxset(inf_out, det);
      detail::write_manifest(detail::manifest_beside(inf_out), args, *inf);
      std::size_t n = 0;
      for (const auto& [id, v] : det) n += v.size();
      out << n << " detections in " << det.size() << " images\n";
      return 0;
    }

    if (rep->parsed()) {
      std::ifstream in(rep_manifest);
      if (!in) throw UserError("cannot read manifest " + rep_manifest);
      json m;
      try {
        in >> m;
      } catch (const json::exception& e) {
        throw UserError(rep_manifest + ": " + e.what());
      }
      if (!m.contains("argv") || !m["argv"].is_array()) throw UserError(rep_manifest + ": no argv recorded");
      const auto argv = m["argv"].get<std::vector<std::string>>();
      if (!argv.empty() && argv.front() == "replay") throw UserError("refusing to replay a replay");
      return run(argv, out, err);
    }
  } catch (const UserError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {  // config, format, geometry validation
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ImageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace adr::cli
