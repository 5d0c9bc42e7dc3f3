// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file losses.hpp
/// @brief Weighted cross-entropy, sigmoid focal loss and smooth-L1, each with
/// its analytic gradient. Natural log throughout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace adr {

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("FocalParams: alpha must lie in (0,1]");
    if (!(gamma >= 0.0)) throw std::invalid_argument("FocalParams: gamma must be >= 0");
  }
};

/// Classification target per anchor. Non-negative values name the positive
/// class; the two sentinels mark background and don't-care anchors.
using AnchorTarget = std::int32_t;
inline constexpr AnchorTarget kNegative = -1;
inline constexpr AnchorTarget kIgnored = -2;

inline constexpr double kProbFloor = 1e-7;

/// Probability-space path. p_t is clamped to [1e-7, 1].
inline double weighted_ce(double p_t, double alpha_t) {
  const double p = std::clamp(p_t, kProbFloor, 1.0);
  return -alpha_t * std::log(p);
}

/// Probability-space focal term -alpha_t (1 - p_t)^gamma ln(p_t).
inline double focal_term(double p_t, double alpha_t, double gamma) {
  const double p = std::clamp(p_t, kProbFloor, 1.0);
  return -alpha_t * std::pow(1.0 - p, gamma) * std::log(p);
}

namespace detail {

template <typename T>
T softplus(T u) {
  return std::max(u, T(0)) + std::log1p(std::exp(-std::abs(u)));
}

template <typename T>
T sigmoid(T u) {
  if (u >= T(0)) return T(1) / (T(1) + std::exp(-u));
  const T e = std::exp(u);
  return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  std::vector<T> grad;
};

/// Binary (sigmoid) focal loss over an anchors x classes logit matrix.
///
/// For a positive anchor the target class has label 1 and all other classes
/// label 0; negatives have label 0 everywhere; ignored anchors are skipped.
/// Writing z = +x for label 1 and z = -x for label 0, p_t = sigmoid(z) and
///   L = alpha_t * sigmoid(-z)^gamma * softplus(-z),
///   dL/dz = -alpha_t * q^gamma * (gamma * (1 - q) * softplus(-z) + q),  q = sigmoid(-z).
/// The sum is divided by max(1, #positive anchors).
template <typename T>
LossAndGrad<T> focal_loss(std::span<const T> logits, std::span<const AnchorTarget> targets, std::size_t num_classes,
                          const FocalParams& params) {
  params.validate();
  if (num_classes == 0 || logits.size() != targets.size() * num_classes)
    throw std::invalid_argument("focal_loss: logits must be shaped (num_anchors x num_classes)");
  LossAndGrad<T> out;
  out.grad.assign(logits.size(), T(0));

  std::size_t num_pos = 0;
  for (AnchorTarget t : targets) {
    if (t >= 0) {
      if (static_cast<std::size_t>(t) >= num_classes) throw std::invalid_argument("focal_loss: class out of range");
      ++num_pos;
    }
  }
  const double norm = static_cast<double>(std::max<std::size_t>(num_pos, 1));

  double total = 0.0;
  const double gamma = params.gamma;
  for (std::size_t a = 0; a < targets.size(); ++a) {
    const AnchorTarget t = targets[a];
    if (t == kIgnored) continue;
    for (std::size_t c = 0; c < num_classes; ++c) {
      const std::size_t i = a * num_classes + c;
      const bool is_pos = (t >= 0 && static_cast<std::size_t>(t) == c);
      const double x = static_cast<double>(logits[i]);
      const double z = is_pos ? x : -x;
      const double alpha_t = is_pos ? params.alpha : 1.0 - params.alpha;
      const double q = detail::sigmoid(-z);
      const double sp = detail::softplus(-z);
      const double mod = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
      total += alpha_t * mod * sp;
      const double dz = -alpha_t * mod * (gamma * (1.0 - q) * sp + q);
      out.grad[i] = static_cast<T>((is_pos ? dz : -dz) / norm);
    }
  }
  out.loss = total / norm;
  return out;
}

/// Smooth-L1 on one 4-vector: 0.5 d^2 / beta when |d| < beta, else |d| - 0.5 beta.
template <typename T>
double smooth_l1(std::span<const T> pred, std::span<const T> target, double beta, std::span<T> grad) {
  if (!(beta > 0)) throw std::invalid_argument("smooth_l1: beta must be positive");
  if (pred.size() != target.size() || grad.size() != pred.size())
    throw std::invalid_argument("smooth_l1: size mismatch");
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = static_cast<double>(pred[k]) - static_cast<double>(target[k]);
    const double ad = std::abs(d);
    if (ad < beta) {
      loss += 0.5 * d * d / beta;
      grad[k] = static_cast<T>(d / beta);
    } else {
      loss += ad - 0.5 * beta;
      grad[k] = static_cast<T>(d > 0 ? 1.0 : -1.0);
    }
  }
  return loss;
}

/// Smooth-L1 summed over positive anchors of an (anchors x 4) delta matrix,
/// divided by max(1, #positives). `targets` holds the encoded GT deltas; rows
/// of non-positive anchors are ignored.
template <typename T>
LossAndGrad<T> box_regression_loss(std::span<const T> pred, std::span<const T> target,
                                   std::span<const AnchorTarget> cls_targets, double beta) {
  if (pred.size() != cls_targets.size() * 4 || target.size() != pred.size())
    throw std::invalid_argument("box_regression_loss: deltas must be shaped (num_anchors x 4)");
  LossAndGrad<T> out;
  out.grad.assign(pred.size(), T(0));
  std::size_t num_pos = 0;
  for (AnchorTarget t : cls_targets) num_pos += (t >= 0);
  const double norm = static_cast<double>(std::max<std::size_t>(num_pos, 1));
  double total = 0.0;
  for (std::size_t a = 0; a < cls_targets.size(); ++a) {
    if (cls_targets[a] < 0) continue;
    total += smooth_l1<T>(pred.subspan(a * 4, 4), target.subspan(a * 4, 4), beta,
                          std::span<T>(out.grad).subspan(a * 4, 4));
  }
  for (auto& g : out.grad) g = static_cast<T>(static_cast<double>(g) / norm);
  out.loss = total / norm;
  return out;
}

}  // namespace adr
