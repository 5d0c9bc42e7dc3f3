// SPDX-License-Identifier: Apache-2.0
// Trains a tiny detector on synthetic scenes for a few hundred iterations,
// then prints the detections on one held-out scene.
#include <cstdio>
#include <string>
#include <vector>

#include "adr/synth.hpp"
#include "adr/trainer.hpp"

int main() {
  std::vector<adr::Sample> scenes;
  adr::SceneParams p;
  for (int i = 0; i < 80; ++i) {
    p.seed = adr::scene_seed(42, i);
    auto s = adr::generate_scene(p);
    scenes.push_back({"scene" + std::to_string(i), std::move(s.image), std::move(s.boxes)});
  }
  const std::vector<adr::Sample> train(scenes.begin(), scenes.begin() + 70);
  const std::vector<adr::Sample> test(scenes.begin() + 70, scenes.end());

  adr::ExperimentConfig cfg = adr::desk_config();
  cfg.iterations = 400;
  cfg.eval_every = 0;
  auto result = adr::train(cfg, train, test);
  std::printf("loss %.3f -> %.3f, held-out AP50 %.3f\n", result.log.iterations.front().loss,
              result.log.iterations.back().loss, result.log.evals.back().report[adr::EvalReport::ap50]);

  const auto anchors = adr::generate_anchors(cfg.anchor_spec(), cfg.input_size).flat();
  const auto dets = adr::infer(result.net, anchors, test.front().image, adr::inference_options(cfg, false));
  for (const auto& b : test.front().boxes) std::printf("gt   [%.0f %.0f %.0f %.0f]\n", b.x_min, b.y_min, b.x_max, b.y_max);
  for (const auto& d : dets)
    std::printf("det  [%.1f %.1f %.1f %.1f] score %.2f\n", d.x_min, d.y_min, d.x_max, d.y_max, *d.score);
}
