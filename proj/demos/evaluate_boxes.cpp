// SPDX-License-Identifier: Apache-2.0
// Scores a handful of detections against ground truth and prints the
// 12-line summary.
#include <iostream>

#include "adr/eval.hpp"

int main() {
  using adr::BBox;
  adr::GroundTruthSet gt{
      {"img0", {BBox(10, 10, 30, 30, 0), BBox(50, 50, 62, 60, 0)}},
      {"img1", {BBox(5, 5, 120, 110, 0)}},
  };
  adr::DetectionSet det{
      {"img0", {BBox(11, 9, 31, 29, 0, 0.95), BBox(12, 12, 30, 31, 0, 0.60), BBox(70, 70, 80, 80, 0, 0.40)}},
      {"img1", {BBox(8, 6, 118, 112, 0, 0.88)}},
  };
  std::cout << adr::render_report(adr::coco_summary(gt, det));
}
