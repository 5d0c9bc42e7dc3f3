// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "adr/optim.hpp"
#include "adr/tensor.hpp"

using adr::ScheduleKind;
using adr::ScheduleSpec;

namespace {

ScheduleSpec spec(ScheduleKind k, double a0, double g = 0.5, double s = 10, double n = 100, long warm = 0) {
  ScheduleSpec sp;
  sp.kind = k;
  sp.alpha0 = a0;
  sp.gamma = g;
  sp.step_width = s;
  sp.horizon = n;
  sp.warmup_steps = warm;
  return sp;
}

}  // namespace

TEST(Schedule, CosineEndpointsExact) {
  const auto s = spec(ScheduleKind::cosine, 0.01);
  EXPECT_EQ(adr::lr_at(s, 0, 0), 0.01);
  EXPECT_EQ(adr::lr_at(s, 100, 0), 0.0);
  EXPECT_EQ(adr::lr_at(s, 150, 0), 0.0);
  EXPECT_NEAR(adr::lr_at(s, 50, 0), 0.005, 1e-17);
}

TEST(Schedule, CosineIsMonotoneNonIncreasing) {
  const auto s = spec(ScheduleKind::cosine, 0.1, 0.5, 10, 37);
  double prev = adr::lr_at(s, 0, 0);
  for (double n = 0.25; n <= 40; n += 0.25) {
    const double cur = adr::lr_at(s, n, 0);
    EXPECT_LE(cur, prev);
    prev = cur;
  }
}

TEST(Schedule, StepTimeExponential) {
  EXPECT_NEAR(adr::lr_at(spec(ScheduleKind::step, 0.1, 0.5, 10), 25, 0), 0.025, 1e-17);
  EXPECT_EQ(adr::lr_at(spec(ScheduleKind::step, 0.1, 0.5, 10), 9.99, 0), 0.1);
  EXPECT_NEAR(adr::lr_at(spec(ScheduleKind::time, 0.1, 0.5), 4, 0), 0.1 / 3.0, 1e-17);
  EXPECT_NEAR(adr::lr_at(spec(ScheduleKind::exponential, 0.1, 0.9), 3, 0), 0.1 * 0.729, 1e-16);
  EXPECT_EQ(adr::lr_at(spec(ScheduleKind::constant, 0.3), 77, 12345), 0.3);
}

TEST(Schedule, WarmupLinearAndReachesOne) {
  const auto s = spec(ScheduleKind::constant, 0.02, 0.5, 10, 100, 2500);
  EXPECT_EQ(adr::warmup_factor(s, 0), 0.0);
  EXPECT_EQ(adr::warmup_factor(s, 1250), 0.5);
  EXPECT_EQ(adr::warmup_factor(s, 2500), 1.0);
  EXPECT_EQ(adr::warmup_factor(s, 100000), 1.0);
  EXPECT_EQ(adr::lr_at(s, 0, 500), 0.02 * (500.0 / 2500.0));
  for (long n = 1; n <= 2500; ++n) EXPECT_GE(adr::warmup_factor(s, n), adr::warmup_factor(s, n - 1));
}

TEST(Schedule, DefaultWarmupIsPaperValueInExperiments) {
  // The library default is off; the experiment preset sets 2500.
  EXPECT_EQ(ScheduleSpec{}.warmup_steps, 0);
}

TEST(Schedule, ValidationAndParsing) {
  EXPECT_THROW(spec(ScheduleKind::step, 0.1, 1.5).validate(), std::invalid_argument);
  EXPECT_THROW(spec(ScheduleKind::cosine, -1).validate(), std::invalid_argument);
  EXPECT_THROW(spec(ScheduleKind::cosine, 0.1, 0.5, 10, 0).validate(), std::invalid_argument);
  for (auto k : {ScheduleKind::constant, ScheduleKind::step, ScheduleKind::time, ScheduleKind::exponential,
                 ScheduleKind::cosine})
    EXPECT_EQ(adr::parse_schedule_kind(adr::to_string(k)), k);
  EXPECT_THROW(adr::parse_schedule_kind("linear"), std::invalid_argument);
}

TEST(Sgd, HandValuesAndZeroGrad) {
  std::vector<double> w{1.0}, g{2.0};
  adr::sgd_step<double>(w, g, 0.1);
  EXPECT_NEAR(w[0], 0.8, 1e-16);
  std::vector<double> w2{3.0, -1.0}, z{0.0, 0.0};
  adr::sgd_step<double>(w2, z, 0.5);
  EXPECT_EQ(w2[0], 3.0);
  EXPECT_EQ(w2[1], -1.0);
}

TEST(Sgd, QuadraticConvergesMonotonically) {
  std::vector<double> w{1.0};
  double prev = 1.0;
  for (int t = 1; t <= 50; ++t) {
    std::vector<double> g{2 * w[0]};
    adr::sgd_step<double>(w, g, 0.1);
    EXPECT_NEAR(w[0], std::pow(0.8, t), 1e-12);
    EXPECT_LT(std::abs(w[0]), prev);
    prev = std::abs(w[0]);
  }
}

TEST(Momentum, ZeroMomentumBitEqualsSgd) {
  adr::Rng rng(4);
  for (bool nesterov : {false, true}) {
    std::vector<float> a(64), b(64), v(64, 0.0f), g(64);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = b[i] = static_cast<float>(rng.uniform(-1, 1));
    for (int step = 0; step < 20; ++step) {
      for (auto& x : g) x = static_cast<float>(rng.uniform(-1, 1));
      adr::sgd_step<float>(a, g, 0.037);
      adr::momentum_step<float>(v, b, g, 0.037, 0.0, nesterov);
      for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
    }
  }
}

TEST(Momentum, UnrolledVelocity) {
  std::vector<double> w{0.0}, v{0.0}, g{1.0};
  adr::momentum_step<double>(v, w, g, 0.1, 0.9, false);
  adr::momentum_step<double>(v, w, g, 0.1, 0.9, false);
  EXPECT_NEAR(v[0], 0.19, 1e-16);
  EXPECT_NEAR(w[0], -0.29, 1e-16);
  EXPECT_EQ(adr::OptimizerHyper{}.momentum, 0.9);
}

TEST(Momentum, NesterovLooksAhead) {
  std::vector<double> w{0.0}, v{0.0}, g{1.0};
  adr::momentum_step<double>(v, w, g, 0.1, 0.9, true);
  EXPECT_NEAR(w[0], -(0.9 * 0.1 + 0.1), 1e-16);
}

TEST(Adam, FirstStepIsAlphaOverOnePlusEps) {
  const adr::OptimizerHyper h;
  std::vector<double> w{0.5}, m{0.0}, s{0.0}, g{1.0};
  adr::adam_step<double>(m, s, w, g, 0.01, 1, h);
  EXPECT_NEAR(0.5 - w[0], 0.01 / (1.0 + 1e-8), 1e-10);
  EXPECT_EQ(h.beta1, 0.9);
  EXPECT_EQ(h.beta2, 0.999);
  EXPECT_EQ(h.eps, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParams) {
  std::vector<double> w{0.5, -2}, m{0, 0}, s{0, 0}, g{0, 0};
  for (long t = 1; t <= 10; ++t) adr::adam_step<double>(m, s, w, g, 0.01, t, {});
  EXPECT_EQ(w[0], 0.5);
  EXPECT_EQ(w[1], -2.0);
}

TEST(Adam, StepCounterChecked) {
  std::vector<double> w{0}, m{0}, s{0}, g{1};
  EXPECT_THROW(adr::adam_step<double>(m, s, w, g, 0.01, 0, {}), std::invalid_argument);
}

TEST(OptimizerClass, MatchesFreeFunctions) {
  adr::Rng rng(6);
  for (auto kind : {adr::OptimizerKind::sgd, adr::OptimizerKind::momentum, adr::OptimizerKind::nesterov,
                    adr::OptimizerKind::adam}) {
    std::vector<double> a(10), b(10), g(10), m(10, 0), s(10, 0);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = b[i] = rng.uniform(-1, 1);
    adr::Optimizer<double> opt(kind);
    for (long t = 1; t <= 5; ++t) {
      for (auto& x : g) x = rng.uniform(-1, 1);
      const std::vector<adr::ParamRef<double>> refs{{a, g}};
      opt.step(refs, 0.05);
      switch (kind) {
        case adr::OptimizerKind::sgd: adr::sgd_step<double>(b, g, 0.05); break;
        case adr::OptimizerKind::momentum: adr::momentum_step<double>(m, b, g, 0.05, 0.9, false); break;
        case adr::OptimizerKind::nesterov: adr::momentum_step<double>(m, b, g, 0.05, 0.9, true); break;
        case adr::OptimizerKind::adam: adr::adam_step<double>(m, s, b, g, 0.05, t, {}); break;
      }
      for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
    }
    EXPECT_EQ(opt.steps(), 5);
    EXPECT_EQ(adr::parse_optimizer_kind(adr::to_string(kind)), kind);
  }
}

TEST(ClipGradNorm, RescalesOnlyAboveLimit) {
  std::vector<double> a{3, 0}, b{0, 4};
  std::vector<std::span<double>> gs{a, b};
  EXPECT_EQ(adr::clip_grad_norm<double>(gs, 10.0), 5.0);
  EXPECT_EQ(a[0], 3.0);
  EXPECT_EQ(adr::clip_grad_norm<double>(gs, 1.0), 5.0);
  EXPECT_NEAR(std::hypot(a[0], b[1]), 1.0, 1e-15);
}
