// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file detector.hpp
/// @brief Desk-scale RetinaNet-style detector: residual backbone, FPN and
/// shared classification/regression heads, all with explicit backward.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "adr/layers.hpp"
#include "adr/tensor.hpp"

namespace adr {

struct DetectorConfig {
  int input_size = 640;
  int in_channels = 1;
  int stem_width = 16;
  std::vector<int> stage_widths{16, 32, 64};  // C3, C4, C5
  int blocks_per_stage = 1;
  int fpn_width = 256;  // d
  int head_depth = 2;
  int num_classes = 1;
  int anchors_per_location = 25;
  int max_level = 5;  // pyramid levels 3..max_level; 6 and 7 come from strided convs on C5
  double prior = 0.01;
  std::uint64_t seed = 0;

  static constexpr int kMinLevel = 3;

  int num_levels() const { return max_level - kMinLevel + 1; }

  void validate() const {
    if (stage_widths.size() != 3) throw std::invalid_argument("DetectorConfig: backbone has exactly 3 stages");
    if (max_level < 5 || max_level > 7) throw std::invalid_argument("DetectorConfig: max_level must be 5, 6 or 7");
    const int coarsest = 1 << max_level;
    if (input_size < coarsest || input_size % coarsest != 0)
      throw std::invalid_argument("DetectorConfig: input_size must be a positive multiple of " +
                                  std::to_string(coarsest));
    if (fpn_width <= 0 || stem_width <= 0 || in_channels <= 0 || num_classes <= 0 || anchors_per_location <= 0)
      throw std::invalid_argument("DetectorConfig: widths and counts must be positive");
    for (int w : stage_widths)
      if (w <= 0) throw std::invalid_argument("DetectorConfig: stage widths must be positive");
    if (head_depth < 0 || blocks_per_stage < 1) throw std::invalid_argument("DetectorConfig: bad depth");
    if (!(prior > 0 && prior < 1)) throw std::invalid_argument("DetectorConfig: prior must lie in (0,1)");
  }

  std::size_t total_anchors() const {
    std::size_t n = 0;
    for (int l = kMinLevel; l <= max_level; ++l) {
      const std::size_t side = static_cast<std::size_t>(input_size >> l);
      n += side * side * static_cast<std::size_t>(anchors_per_location);
    }
    return n;
  }
};

struct LevelShape {
  int level;
  int height;
  int width;
};

/// Per-anchor outputs in the shared anchor index space:
/// logits is (anchors x num_classes), deltas is (anchors x 4).
template <typename T>
struct DetectorOutput {
  std::vector<T> logits;
  std::vector<T> deltas;
  std::vector<LevelShape> levels;
};

template <typename T>
struct HeadCache {
  std::vector<ConvCache<T>> tower;
  std::vector<Tensor<T>> act;  // post-ReLU outputs of the tower
  ConvCache<T> out;
};

template <typename T>
struct DetectorCache {
  ConvCache<T> stem1, stem2;
  Tensor<T> s1, s2;
  std::vector<std::vector<ResidualCache<T>>> stages;
  std::vector<Tensor<T>> c;  // C3..C5
  FpnCache<T> fpn;
  ConvCache<T> p6, p7;
  Tensor<T> p6_relu;
  std::vector<Tensor<T>> p;  // P3..P_max, fine to coarse
  std::vector<HeadCache<T>> cls, box;
};

template <typename T>
class Detector {
 public:
  explicit Detector(DetectorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int d = cfg_.fpn_width;
    stem1_ = Conv2d<T>(cfg_.in_channels, cfg_.stem_width, 3, 2, 1);
    stem2_ = Conv2d<T>(cfg_.stem_width, cfg_.stem_width, 3, 2, 1);
    int prev = cfg_.stem_width;
    stages_.resize(3);
    for (int s = 0; s < 3; ++s) {
      const int w = cfg_.stage_widths[s];
      stages_[s].emplace_back(prev, w, 2, true);
      for (int b = 1; b < cfg_.blocks_per_stage; ++b) stages_[s].emplace_back(w, w, 1, false);
      prev = w;
    }
    fpn_ = Fpn<T>({cfg_.stage_widths[2], cfg_.stage_widths[1], cfg_.stage_widths[0]}, d);
    if (cfg_.max_level >= 6) p6_ = Conv2d<T>(cfg_.stage_widths[2], d, 3, 2, 1);
    if (cfg_.max_level >= 7) p7_ = Conv2d<T>(d, d, 3, 2, 1);
    for (int i = 0; i < cfg_.head_depth; ++i) {
      cls_tower_.emplace_back(d, d, 3, 1, 1);
      box_tower_.emplace_back(d, d, 3, 1, 1);
    }
    cls_out_ = Conv2d<T>(d, cfg_.anchors_per_location * cfg_.num_classes, 1, 1, 0);
    box_out_ = Conv2d<T>(d, cfg_.anchors_per_location * 4, 1, 1, 0);
    init();
  }

  const DetectorConfig& config() const { return cfg_; }

  /// Every trainable tensor with a stable name, in a fixed order.
  std::vector<NamedParam<T>> parameters() {
    std::vector<NamedParam<T>> out;
    stem1_.collect("stem1", out);
    stem2_.collect("stem2", out);
    for (std::size_t s = 0; s < stages_.size(); ++s)
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        stages_[s][b].collect("stage" + std::to_string(s) + ".block" + std::to_string(b), out);
    fpn_.collect("fpn", out);
    if (cfg_.max_level >= 6) p6_.collect("p6", out);
    if (cfg_.max_level >= 7) p7_.collect("p7", out);
    for (std::size_t i = 0; i < cls_tower_.size(); ++i) {
      cls_tower_[i].collect("cls_head.conv" + std::to_string(i), out);
      box_tower_[i].collect("box_head.conv" + std::to_string(i), out);
    }
    cls_out_.collect("cls_head.out", out);
    box_out_.collect("box_head.out", out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.value->numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.grad->zero();
  }

  /// Copies parameter values into a detector of another scalar type.
  template <typename U>
  Detector<U> cast() {
    Detector<U> out(cfg_);
    auto src = parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = src[i].value->template cast<U>();
    return out;
  }

  DetectorOutput<T> forward(const Tensor<T>& image, DetectorCache<T>& cache) const {
    if (image.shape.size() != 3 || image.channels() != cfg_.in_channels || image.height() != cfg_.input_size ||
        image.width() != cfg_.input_size)
      throw std::invalid_argument("Detector: image shape " + shape_str(image.shape) + " does not match config");

    cache.s1 = relu(stem1_.forward(image, cache.stem1));
    cache.s2 = relu(stem2_.forward(cache.s1, cache.stem2));
    cache.stages.assign(stages_.size(), {});
    cache.c.clear();
    Tensor<T> x = cache.s2;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      cache.stages[s].resize(stages_[s].size());
      for (std::size_t b = 0; b < stages_[s].size(); ++b) x = stages_[s][b].forward(x, cache.stages[s][b]);
      cache.c.push_back(x);
    }

    auto p_coarse_first = fpn_.forward({cache.c[2], cache.c[1], cache.c[0]}, cache.fpn);
    cache.p = {p_coarse_first[2], p_coarse_first[1], p_coarse_first[0]};
    if (cfg_.max_level >= 6) {
      cache.p.push_back(p6_.forward(cache.c[2], cache.p6));
      if (cfg_.max_level >= 7) {
        cache.p6_relu = relu(cache.p.back());
        cache.p.push_back(p7_.forward(cache.p6_relu, cache.p7));
      }
    }

    DetectorOutput<T> out;
    const int a_per = cfg_.anchors_per_location;
    const int k = cfg_.num_classes;
    out.logits.reserve(cfg_.total_anchors() * k);
    out.deltas.reserve(cfg_.total_anchors() * 4);
    cache.cls.assign(cache.p.size(), {});
    cache.box.assign(cache.p.size(), {});
    for (std::size_t li = 0; li < cache.p.size(); ++li) {
      const Tensor<T>& feat = cache.p[li];
      const int h = feat.height(), w = feat.width();
      out.levels.push_back({DetectorConfig::kMinLevel + static_cast<int>(li), h, w});
      const Tensor<T> cls = head_forward(feat, cls_tower_, cls_out_, cache.cls[li]);
      const Tensor<T> box = head_forward(feat, box_tower_, box_out_, cache.box[li]);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          for (int a = 0; a < a_per; ++a) {
            for (int c = 0; c < k; ++c) out.logits.push_back(cls.at(a * k + c, y, xx));
            for (int j = 0; j < 4; ++j) out.deltas.push_back(box.at(a * 4 + j, y, xx));
          }
    }
    return out;
  }

  /// Accumulates parameter gradients for dLoss/dlogits and dLoss/ddeltas and
  /// returns dLoss/dimage.
  Tensor<T> backward(std::span<const T> grad_logits, std::span<const T> grad_deltas, const DetectorCache<T>& cache) {
    const int a_per = cfg_.anchors_per_location;
    const int k = cfg_.num_classes;
    if (grad_logits.size() != cfg_.total_anchors() * k || grad_deltas.size() != cfg_.total_anchors() * 4)
      throw std::invalid_argument("Detector::backward: gradient size does not match anchor count");

    std::vector<Tensor<T>> grad_p(cache.p.size());
    std::size_t offset = 0;
    for (std::size_t li = 0; li < cache.p.size(); ++li) {
      const int h = cache.p[li].height(), w = cache.p[li].width();
      Tensor<T> gcls({a_per * k, h, w});
      Tensor<T> gbox({a_per * 4, h, w});
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          for (int a = 0; a < a_per; ++a, ++offset) {
            for (int c = 0; c < k; ++c) gcls.at(a * k + c, y, xx) = grad_logits[offset * k + c];
            for (int j = 0; j < 4; ++j) gbox.at(a * 4 + j, y, xx) = grad_deltas[offset * 4 + j];
          }
      grad_p[li] = head_backward(gcls, cls_tower_, cls_out_, cache.cls[li]);
      grad_p[li] += head_backward(gbox, box_tower_, box_out_, cache.box[li]);
    }

    Tensor<T> g_c5_extra;
    if (cfg_.max_level >= 6) {
      Tensor<T> g6 = grad_p[3];
      if (cfg_.max_level >= 7) g6 += relu_backward(p7_.backward(grad_p[4], cache.p7), cache.p6_relu);
      g_c5_extra = p6_.backward(g6, cache.p6);
    }

    auto gc = fpn_.backward({grad_p[2], grad_p[1], grad_p[0]}, cache.fpn);
    std::vector<Tensor<T>> grad_c = {gc[2], gc[1], gc[0]};
    if (cfg_.max_level >= 6) grad_c[2] += g_c5_extra;

    Tensor<T> g;
    for (std::size_t step = 0; step < stages_.size(); ++step) {
      const std::size_t s = stages_.size() - 1 - step;
      if (step == 0) {
        g = grad_c[s];
      } else {
        g += grad_c[s];
      }
      for (std::size_t bs = 0; bs < stages_[s].size(); ++bs) {
        const std::size_t b = stages_[s].size() - 1 - bs;
        g = stages_[s][b].backward(g, cache.stages[s][b]);
      }
    }
    g = stem2_.backward(relu_backward(g, cache.s2), cache.stem2);
    return stem1_.backward(relu_backward(g, cache.s1), cache.stem1);
  }

 private:
  void init() {
    Rng rng(cfg_.seed ^ 0x9E3779B97F4A7C15ULL);
    stem1_.init_uniform(rng);
    stem2_.init_uniform(rng);
    for (auto& st : stages_)
      for (auto& b : st) b.init(rng);
    fpn_.init(rng);
    if (cfg_.max_level >= 6) p6_.init_uniform(rng, 3.0);
    if (cfg_.max_level >= 7) p7_.init_uniform(rng, 3.0);
    for (auto& c : cls_tower_) c.init_uniform(rng);
    for (auto& c : box_tower_) c.init_uniform(rng);
    // Rare-positive prior so early focal/CE losses are not swamped by background.
    cls_out_.init_bound(rng, 0.01, -std::log((1.0 - cfg_.prior) / cfg_.prior));
    box_out_.init_bound(rng, 0.01, 0.0);
  }

  static Tensor<T> head_forward(const Tensor<T>& feat, const std::vector<Conv2d<T>>& tower, const Conv2d<T>& out,
                                HeadCache<T>& cache) {
    cache.tower.assign(tower.size(), {});
    cache.act.assign(tower.size(), {});
    const Tensor<T>* x = &feat;
    for (std::size_t i = 0; i < tower.size(); ++i) {
      cache.act[i] = relu(tower[i].forward(*x, cache.tower[i]));
      x = &cache.act[i];
    }
    return out.forward(*x, cache.out);
  }

  static Tensor<T> head_backward(const Tensor<T>& grad, std::vector<Conv2d<T>>& tower, Conv2d<T>& out,
                                 const HeadCache<T>& cache) {
    Tensor<T> g = out.backward(grad, cache.out);
    for (std::size_t s = 0; s < tower.size(); ++s) {
      const std::size_t i = tower.size() - 1 - s;
      g = tower[i].backward(relu_backward(g, cache.act[i]), cache.tower[i]);
    }
    return g;
  }

  DetectorConfig cfg_;
  Conv2d<T> stem1_, stem2_;
  std::vector<std::vector<ResidualBlock<T>>> stages_;
  Fpn<T> fpn_;
  Conv2d<T> p6_, p7_;
  std::vector<Conv2d<T>> cls_tower_, box_tower_;
  Conv2d<T> cls_out_, box_out_;
};

}  // namespace adr
