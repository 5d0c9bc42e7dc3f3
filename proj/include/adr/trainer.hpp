// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file trainer.hpp
/// @brief Training loop, inference and the logs they produce.
///
/// One iteration: draw a batch from the epoch's shuffled order, augment each
/// image, resize it to the square input, match anchors, run forward and
/// backward, average gradients over the batch, optionally clip, then take one
/// optimizer step at lr_at(schedule, epoch, iteration). The epoch fed to the
/// schedule is the integer count of completed passes over the training split.
/// Everything is single threaded and driven by one seeded Rng, so a config
/// and dataset determine the entire log.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adr/anchors.hpp"
#include "adr/data.hpp"
#include "adr/detector.hpp"
#include "adr/eval.hpp"
#include "adr/experiment.hpp"
#include "adr/losses.hpp"
#include "adr/optim.hpp"

namespace adr {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An in-memory annotated image.
struct Sample {
  std::string id;
  Image image;
  std::vector<BBox> boxes;
};

inline std::vector<Sample> load_samples(const std::vector<AnnotationRecord>& records) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.id(), read_image(r.image_path), r.boxes});
  return out;
}

struct InferenceOptions {
  double score_threshold = 0.5;
  double nms_iou = 0.5;
  int max_detections = 100;
  int pre_nms_top_k = 1000;
};

inline InferenceOptions inference_options(const ExperimentConfig& c, bool for_eval) {
  return {for_eval ? c.eval_score_threshold : c.score_threshold, c.nms_iou, c.max_detections, c.pre_nms_top_k};
}

/// Largest log-scale delta accepted by the decoder, so exp() stays bounded.
inline constexpr double kMaxLogDelta = 4.135166556742356;  // ln(1000/16)

/// Resize, forward, threshold, decode, class-aware NMS, then map boxes back
/// to original image coordinates and clip them to the image.
template <typename T>
std::vector<BBox> infer(const Detector<T>& net, const std::vector<BBox>& anchors, const Image& image,
                        const InferenceOptions& opt) {
  const int size = net.config().input_size;
  const Resized rs = resize_square(image, {}, size);
  DetectorCache<T> cache;
  const auto out = net.forward(image_to_tensor<T>(rs.image), cache);
  const std::size_t k = static_cast<std::size_t>(net.config().num_classes);
  if (out.logits.size() != anchors.size() * k) throw std::invalid_argument("infer: anchor grid does not match network");

  struct Cand {
    double score;
    std::size_t anchor;
    int label;
  };
  std::vector<Cand> cands;
  for (std::size_t a = 0; a < anchors.size(); ++a)
    for (std::size_t c = 0; c < k; ++c) {
      const double s = detail::sigmoid(static_cast<double>(out.logits[a * k + c]));
      if (s >= opt.score_threshold) cands.push_back({s, a, static_cast<int>(c)});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.score > y.score; });
  if (cands.size() > static_cast<std::size_t>(opt.pre_nms_top_k)) cands.resize(opt.pre_nms_top_k);

  std::vector<BBox> dets;
  dets.reserve(cands.size());
  for (const auto& c : cands) {
    BoxDelta d;
    for (int j = 0; j < 4; ++j) d[j] = static_cast<double>(out.deltas[c.anchor * 4 + j]);
    d[2] = std::min(d[2], kMaxLogDelta);
    d[3] = std::min(d[3], kMaxLogDelta);
    BBox b = decode_box(anchors[c.anchor], d);
    b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(size));
    b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(size));
    b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(size));
    b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(size));
    if (!(b.width() > 0 && b.height() > 0)) continue;
    b.label = c.label;
    b.score = c.score;
    dets.push_back(b);
  }
  auto kept = nms(dets, opt.nms_iou);
  if (kept.size() > static_cast<std::size_t>(opt.max_detections)) kept.resize(opt.max_detections);
  for (auto& b : kept) {
    b = rs.transform.invert(b);
    b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(image.width));
    b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(image.width));
    b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(image.height));
    b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(image.height));
  }
  return kept;
}

template <typename T>
DetectionSet predict_set(const Detector<T>& net, const std::vector<BBox>& anchors, const std::vector<Sample>& samples,
                         const InferenceOptions& opt) {
  DetectionSet out;
  for (const auto& s : samples) out[s.id] = infer(net, anchors, s.image, opt);
  return out;
}

inline GroundTruthSet ground_truth_set(const std::vector<Sample>& samples) {
  GroundTruthSet gt;
  for (const auto& s : samples) {
    auto& v = gt[s.id];
    for (BBox b : s.boxes) {
      if (!b.label) b.label = 0;
      v.push_back(b);
    }
  }
  return gt;
}

struct IterationRecord {
  long iteration = 0;
  long epoch = 0;
  double lr = 0;
  double loss = 0;
  double cls_loss = 0;
  double box_loss = 0;
  std::size_t positives = 0;
  double grad_norm = 0;
};

struct EvalRecord {
  long iteration = 0;
  EvalReport report;
};

struct TrainLog {
  ScheduleSpec schedule;
  long iterations_per_epoch = 1;
  std::vector<IterationRecord> iterations;
  std::vector<EvalRecord> evals;

  std::string to_csv() const {
    std::string s = "iteration,epoch,lr,loss,cls_loss,box_loss,positives,grad_norm\n";
    char buf[256];
    for (const auto& r : iterations) {
      std::snprintf(buf, sizeof(buf), "%ld,%ld,%.17g,%.9g,%.9g,%.9g,%zu,%.9g\n", r.iteration, r.epoch, r.lr, r.loss,
                    r.cls_loss, r.box_loss, r.positives, r.grad_norm);
      s += buf;
    }
    return s;
  }

  nlohmann::json evals_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : evals) {
      nlohmann::json j;
      j["iteration"] = e.iteration;
      j["metrics"] = report_json(e.report);
      arr.push_back(std::move(j));
    }
    return arr;
  }

  static nlohmann::json report_json(const EvalReport& r) {
    nlohmann::json j = nlohmann::json::object();
    const auto& rows = report_rows();
    for (std::size_t i = 0; i < rows.size(); ++i) j[rows[i].key] = r.values[i];
    return j;
  }
};

struct TrainHooks {
  /// Called after every optimizer step.
  std::function<void(const IterationRecord&)> on_iteration;
  /// Called after every evaluation.
  std::function<void(const EvalRecord&)> on_eval;
};

struct TrainResult {
  ExperimentConfig config;
  Detector<float> net;
  TrainLog log;
};

/// Classification targets and regression targets for one image.
struct ImageTargets {
  std::vector<AnchorTarget> cls;
  std::vector<float> box;
  std::size_t positives = 0;
};

inline ImageTargets build_targets(const std::vector<BBox>& anchors, const std::vector<BBox>& gt,
                                  MatchThresholds th) {
  const auto m = match_anchors(anchors, gt, th);
  ImageTargets t;
  t.cls.assign(anchors.size(), kNegative);
  t.box.assign(anchors.size() * 4, 0.0f);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (m.state[a] == MatchState::ignored) {
      t.cls[a] = kIgnored;
    } else if (m.state[a] == MatchState::positive) {
      t.cls[a] = gt[m.gt_index[a]].label.value_or(0);
      for (int j = 0; j < 4; ++j) t.box[a * 4 + j] = static_cast<float>(m.target[a][j]);
      ++t.positives;
    }
  }
  return t;
}

inline TrainResult train(const ExperimentConfig& cfg, const std::vector<Sample>& train_set,
                         const std::vector<Sample>& test_set, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (train_set.empty()) throw TrainingError("training split is empty");
  Detector<float> net(cfg.detector());
  const auto grid = generate_anchors(cfg.anchor_spec(), cfg.input_size);
  const auto anchors = grid.flat();
  const MatchThresholds th{cfg.match_positive, cfg.match_negative};
  const FocalParams focal = cfg.focal();
  const AugmentPolicy policy = cfg.augment_policy();
  const std::size_t k = static_cast<std::size_t>(cfg.num_classes);

  TrainLog log;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  log.iterations_per_epoch = static_cast<long>((train_set.size() + batch - 1) / batch);
  log.schedule = cfg.schedule_spec(static_cast<double>(cfg.iterations) / log.iterations_per_epoch);
  log.schedule.validate();

  Optimizer<float> opt(cfg.optimizer, cfg.hyper());
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto params = net.parameters();
  std::vector<ParamRef<float>> refs;
  std::vector<std::span<float>> grads;
  for (const auto& p : params) {
    refs.push_back({p.value->span(), p.grad->span()});
    grads.push_back(p.grad->span());
  }

  const auto evaluate = [&](long iteration) {
    if (test_set.empty()) return;
    EvalRecord e{iteration, coco_summary(ground_truth_set(test_set),
                                         predict_set(net, anchors, test_set, inference_options(cfg, true)))};
    log.evals.push_back(e);
    if (hooks.on_eval) hooks.on_eval(e);
  };

  for (long it = 0; it < cfg.iterations; ++it) {
    const long in_epoch = it % log.iterations_per_epoch;
    if (in_epoch == 0) rng.shuffle(order);
    IterationRecord rec;
    rec.iteration = it;
    rec.epoch = it / log.iterations_per_epoch;
    rec.lr = lr_at(log.schedule, static_cast<double>(rec.epoch), it);

    const std::size_t b0 = static_cast<std::size_t>(in_epoch) * batch;
    const std::size_t b1 = std::min(b0 + batch, order.size());
    const float inv_b = 1.0f / static_cast<float>(b1 - b0);
    std::string batch_ids;
    net.zero_grad();
    try {
      for (std::size_t bi = b0; bi < b1; ++bi) {
        const Sample& s = train_set[order[bi]];
        batch_ids += (batch_ids.empty() ? "" : ",") + s.id;
        const Augmented aug = augment(s.image, s.boxes, policy, rng);
        const Resized rs = resize_square(aug.image, aug.boxes, cfg.input_size);
        std::vector<BBox> gt;
        for (const auto& b : rs.boxes)
          if (b.width() > 0 && b.height() > 0) gt.push_back(b);
        const ImageTargets tg = build_targets(anchors, gt, th);

        DetectorCache<float> cache;
        const auto out = net.forward(image_to_tensor<float>(rs.image), cache);
        auto cl = focal_loss<float>(out.logits, tg.cls, k, focal);
        auto bl = box_regression_loss<float>(out.deltas, tg.box, tg.cls, cfg.box_beta);
        for (auto& g : cl.grad) g *= inv_b;
        for (auto& g : bl.grad) g *= inv_b;
        net.backward(cl.grad, bl.grad, cache);
        rec.cls_loss += cl.loss * inv_b;
        rec.box_loss += bl.loss * inv_b;
        rec.positives += tg.positives;
      }
    } catch (const NumericalError& e) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "non-finite value at iteration %ld (lr %.6g): ", it, rec.lr);
      throw TrainingError(buf + std::string(e.what()) + "; batch " + batch_ids);
    }
    rec.loss = rec.cls_loss + rec.box_loss;
    rec.grad_norm = clip_grad_norm<float>(grads, cfg.grad_clip);
    if (!std::isfinite(rec.loss) || !std::isfinite(rec.grad_norm)) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "non-finite loss at iteration %ld (lr %.6g, cls %g, box %g, grad norm %g)", it,
                    rec.lr, rec.cls_loss, rec.box_loss, rec.grad_norm);
      throw TrainingError(buf + std::string("; batch ") + batch_ids);
    }
    opt.step(refs, rec.lr);
    log.iterations.push_back(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec);
    if (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0 && it + 1 != cfg.iterations) evaluate(it + 1);
  }
  evaluate(cfg.iterations);
  return {cfg, std::move(net), std::move(log)};
}

}  // namespace adr
