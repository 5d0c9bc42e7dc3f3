// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file optim.hpp
/// @brief Learning-rate laws and first-order optimizers (SGD, momentum,
/// Nesterov, ADAM) over flat parameter blocks.

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adr {

enum class ScheduleKind { constant, step, time, exponential, cosine };

inline std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::step: return "step";
    case ScheduleKind::time: return "time";
    case ScheduleKind::exponential: return "exponential";
    case ScheduleKind::cosine: return "cosine";
  }
  return "?";
}

inline ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "step") return ScheduleKind::step;
  if (s == "time") return ScheduleKind::time;
  if (s == "exponential") return ScheduleKind::exponential;
  if (s == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule kind: " + std::string(s));
}

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::cosine;
  double alpha0 = 0.01;
  double gamma = 0.5;      // decay factor for step/time/exponential
  double step_width = 10;  // epochs between step-decay drops
  double horizon = 100;    // cosine horizon in epochs
  long warmup_steps = 0;   // iterations; 0 disables

  void validate() const {
    if (!(alpha0 > 0)) throw std::invalid_argument("ScheduleSpec: alpha0 must be positive");
    const bool uses_gamma =
        kind == ScheduleKind::step || kind == ScheduleKind::time || kind == ScheduleKind::exponential;
    if (uses_gamma && kind != ScheduleKind::time && !(gamma > 0 && gamma <= 1))
      throw std::invalid_argument("ScheduleSpec: gamma must lie in (0,1]");
    if (kind == ScheduleKind::time && !(gamma >= 0)) throw std::invalid_argument("ScheduleSpec: gamma must be >= 0");
    if (kind == ScheduleKind::step && !(step_width >= 1))
      throw std::invalid_argument("ScheduleSpec: step width must be >= 1");
    if (kind == ScheduleKind::cosine && !(horizon >= 1))
      throw std::invalid_argument("ScheduleSpec: horizon must be >= 1");
    if (warmup_steps < 0) throw std::invalid_argument("ScheduleSpec: warmup_steps must be >= 0");
  }
};

/// Multiplier applied to the base law during warm-up: step / warmup_steps,
/// reaching exactly 1 at the end of warm-up.
inline double warmup_factor(const ScheduleSpec& spec, long step) {
  if (spec.warmup_steps <= 0 || step >= spec.warmup_steps) return 1.0;
  return static_cast<double>(step) / static_cast<double>(spec.warmup_steps);
}

/// Learning rate at epoch `n` (may be fractional) and iteration `step`.
inline double lr_at(const ScheduleSpec& spec, double n, long step) {
  double a = spec.alpha0;
  switch (spec.kind) {
    case ScheduleKind::constant: break;
    case ScheduleKind::step: a = spec.alpha0 * std::pow(spec.gamma, std::floor(n / spec.step_width)); break;
    case ScheduleKind::time: a = spec.alpha0 / (1.0 + spec.gamma * n); break;
    case ScheduleKind::exponential: a = spec.alpha0 * std::pow(spec.gamma, n); break;
    case ScheduleKind::cosine: {
      if (n >= spec.horizon) {
        a = 0.0;
      } else {
        a = 0.5 * (1.0 + std::cos(n * std::numbers::pi / spec.horizon)) * spec.alpha0;
      }
      break;
    }
  }
  return a * warmup_factor(spec, step);
}

enum class OptimizerKind { sgd, momentum, nesterov, adam };

inline std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::nesterov: return "nesterov";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

inline OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "momentum") return OptimizerKind::momentum;
  if (s == "nesterov") return OptimizerKind::nesterov;
  if (s == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer: " + std::string(s));
}

struct OptimizerHyper {
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
void check_same_size(std::span<T> params, std::span<const T> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient shape mismatch");
}

/// W <- W - alpha * g
template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, double alpha) {
  check_same_size(params, grads);
  const T a = static_cast<T>(alpha);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= a * grads[i];
}

/// v <- momentum * v + alpha * g, then W <- W - v (plain) or
/// W <- W - (momentum * v + alpha * g) (Nesterov, look-ahead form).
template <typename T>
void momentum_step(std::span<T> velocity, std::span<T> params, std::span<const T> grads, double alpha,
                   double momentum, bool nesterov) {
  check_same_size(params, grads);
  if (velocity.size() != params.size()) throw std::invalid_argument("momentum_step: state shape mismatch");
  const T a = static_cast<T>(alpha);
  const T m = static_cast<T>(momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = m * velocity[i] + a * grads[i];
    if (nesterov) {
      params[i] -= m * velocity[i] + a * grads[i];
    } else {
      params[i] -= velocity[i];
    }
  }
}

/// One ADAM update; `t` is the already-incremented step count (>= 1).
template <typename T>
void adam_step(std::span<T> first, std::span<T> second, std::span<T> params, std::span<const T> grads, double alpha,
               long t, const OptimizerHyper& h) {
  check_same_size(params, grads);
  if (first.size() != params.size() || second.size() != params.size())
    throw std::invalid_argument("adam_step: state shape mismatch");
  if (t < 1) throw std::invalid_argument("adam_step: step counter must be >= 1");
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double v = h.beta1 * static_cast<double>(first[i]) + (1.0 - h.beta1) * g;
    const double s = h.beta2 * static_cast<double>(second[i]) + (1.0 - h.beta2) * g * g;
    first[i] = static_cast<T>(v);
    second[i] = static_cast<T>(s);
    const double vhat = v / c1;
    const double shat = s / c2;
    params[i] = static_cast<T>(static_cast<double>(params[i]) - alpha * vhat / (std::sqrt(shat) + h.eps));
  }
}

/// A parameter tensor and its gradient, both flat.
template <typename T>
struct ParamRef {
  std::span<T> value;
  std::span<const T> grad;
};

/// Owns the per-parameter accumulators for a fixed list of parameter blocks.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, OptimizerHyper hyper = {}) : kind_(kind), hyper_(hyper) {
    if (!(hyper_.eps > 0)) throw std::invalid_argument("Optimizer: eps must be positive");
    if (!(hyper_.beta1 >= 0 && hyper_.beta1 < 1 && hyper_.beta2 >= 0 && hyper_.beta2 < 1))
      throw std::invalid_argument("Optimizer: betas must lie in [0,1)");
  }

  OptimizerKind kind() const { return kind_; }
  long steps() const { return t_; }
  const OptimizerHyper& hyper() const { return hyper_; }

  void step(std::span<const ParamRef<T>> blocks, double alpha) {
    if (first_.empty()) {
      for (const auto& b : blocks) {
        first_.emplace_back(b.value.size(), T(0));
        second_.emplace_back(kind_ == OptimizerKind::adam ? b.value.size() : 0, T(0));
      }
    }
    if (first_.size() != blocks.size()) throw std::invalid_argument("Optimizer: parameter block count changed");
    ++t_;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      switch (kind_) {
        case OptimizerKind::sgd: sgd_step<T>(b.value, b.grad, alpha); break;
        case OptimizerKind::momentum: momentum_step<T>(first_[i], b.value, b.grad, alpha, hyper_.momentum, false); break;
        case OptimizerKind::nesterov: momentum_step<T>(first_[i], b.value, b.grad, alpha, hyper_.momentum, true); break;
        case OptimizerKind::adam: adam_step<T>(first_[i], second_[i], b.value, b.grad, alpha, t_, hyper_); break;
      }
    }
  }

 private:
  OptimizerKind kind_;
  OptimizerHyper hyper_;
  long t_ = 0;
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
};

/// Rescales gradients in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<const std::span<T>> grads, double max_norm) {
  double sq = 0.0;
  for (auto g : grads)
    for (T v : g) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto g : grads)
      for (T& v : g) v *= f;
  }
  return norm;
}

}  // namespace adr
