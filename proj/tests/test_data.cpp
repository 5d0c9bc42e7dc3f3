// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "adr/data.hpp"
#include "adr/synth.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("adr_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

adr::Image ramp(int w, int h) {
  adr::Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint8_t>((x * 7 + y * 13) % 256);
  return img;
}

std::vector<adr::AnnotationRecord> records(std::size_t n, int per_series = 10) {
  std::vector<adr::AnnotationRecord> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i].series = "C" + std::to_string(i / per_series);
    v[i].index = static_cast<int>(i % per_series) + 1;
  }
  return v;
}

}  // namespace

TEST(GroundTruth, ColumnOrderIsIndexX1X2Y1Y2) {
  std::istringstream in("1 10 50 20 60\n");
  std::vector<adr::Diagnostic> d;
  const auto rows = adr::parse_ground_truth(in, "gt", d);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(d.empty());
  EXPECT_EQ(rows[0].index, 1);
  EXPECT_EQ(rows[0].box.x_min, 10);
  EXPECT_EQ(rows[0].box.y_min, 20);
  EXPECT_EQ(rows[0].box.x_max, 50);
  EXPECT_EQ(rows[0].box.y_max, 60);
}

TEST(GroundTruth, EmptyAndCommentOnlyTables) {
  std::vector<adr::Diagnostic> d;
  std::istringstream empty("");
  EXPECT_TRUE(adr::parse_ground_truth(empty, "gt", d).empty());
  std::istringstream comments("# header\n\n   \n");
  EXPECT_TRUE(adr::parse_ground_truth(comments, "gt", d).empty());
  EXPECT_TRUE(d.empty());
}

TEST(GroundTruth, BadRowsAreReportedWithLineNumbers) {
  std::istringstream in("1 2 3\n2 a 3 4 5\n3 50 10 20 60\n-1 0 1 0 1\n4 0 1 0 1\n1.5 0 1 0 1\n");
  std::vector<adr::Diagnostic> d;
  const auto rows = adr::parse_ground_truth(in, "gt", d);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].index, 4);
  ASSERT_EQ(d.size(), 5u);
  EXPECT_EQ(d[0].line, 1);
  EXPECT_EQ(d[1].line, 2);
  EXPECT_EQ(d[2].line, 3);
  EXPECT_NE(d[2].message.find("column order"), std::string::npos);
  EXPECT_EQ(d[4].line, 6);
}

TEST(Loader, ReadsSeriesLayout) {
  const fs::path root = scratch("loader");
  fs::create_directories(root / "C0001");
  fs::create_directories(root / "C0002");
  adr::write_pgm(ramp(40, 30), root / "C0001" / "C0001_0001.pgm");
  adr::write_pgm(ramp(40, 30), root / "C0001" / "C0001_0002.pgm");
  adr::write_pgm(ramp(20, 20), root / "C0002" / "C0002_0007.pgm");
  adr::write_pgm(ramp(20, 20), root / "C0002" / "noindex.pgm");
  std::ofstream(root / "C0001" / "ground_truth.txt") << "1 1 11 2 12\n1 30 50 5 9\n9 0 1 0 1\n";
  std::ofstream(root / "C0002" / "ground_truth.txt") << "";
  const auto ds = adr::load_gdxray(root);
  ASSERT_EQ(ds.records.size(), 3u);
  EXPECT_EQ(ds.labeled_count(), 1u);
  EXPECT_EQ(ds.records[0].id(), "C0001/1");
  EXPECT_EQ(ds.records[0].width, 40);
  EXPECT_EQ(ds.records[0].height, 30);
  ASSERT_EQ(ds.records[0].boxes.size(), 2u);
  EXPECT_EQ(ds.records[0].boxes[0], adr::BBox(1, 2, 11, 12, 0));
  EXPECT_EQ(ds.records[0].boxes[1].x_max, 40);  // clipped to the image
  EXPECT_TRUE(ds.records[1].boxes.empty());
  EXPECT_EQ(ds.records[2].id(), "C0002/7");
  EXPECT_EQ(ds.diagnostics.size(), 2u);  // missing index 9, nameless image
  fs::remove_all(root);
}

TEST(Loader, MissingRootThrows) {
  EXPECT_THROW(adr::load_gdxray("/nonexistent/adr/root"), adr::DataError);
}

TEST(Split, SizesFollowFraction) {
  const auto s = adr::split(records(100), 0.25, 1);
  EXPECT_EQ(s.test.size(), 25u);
  EXPECT_EQ(s.train.size(), 75u);
  const auto t = adr::split(records(10), 0.4, 1);
  EXPECT_EQ(t.test.size(), 4u);
  EXPECT_EQ(t.train.size(), 6u);
  EXPECT_THROW(adr::split(records(10), 0.0, 1), std::invalid_argument);
  EXPECT_THROW(adr::split(records(10), 1.0, 1), std::invalid_argument);
}

TEST(Split, DeterministicDisjointAndExhaustive) {
  const auto recs = records(57);
  const auto a = adr::split(recs, 0.3, 9), b = adr::split(recs, 0.3, 9), c = adr::split(recs, 0.3, 10);
  std::set<std::string> ta, tb, tc, tr;
  for (const auto& r : a.test) ta.insert(r.id());
  for (const auto& r : b.test) tb.insert(r.id());
  for (const auto& r : c.test) tc.insert(r.id());
  for (const auto& r : a.train) tr.insert(r.id());
  EXPECT_EQ(ta, tb);
  EXPECT_NE(ta, tc);
  for (const auto& id : ta) EXPECT_EQ(tr.count(id), 0u);
  EXPECT_EQ(ta.size() + tr.size(), recs.size());
}

TEST(Split, BySeriesKeepsSeriesTogether) {
  const auto s = adr::split(records(100, 10), 0.25, 3, true);
  std::set<std::string> test_series, train_series;
  for (const auto& r : s.test) test_series.insert(r.series);
  for (const auto& r : s.train) train_series.insert(r.series);
  for (const auto& x : test_series) EXPECT_EQ(train_series.count(x), 0u);
  EXPECT_GE(s.test.size(), 25u);
}

TEST(Resize, SquareInputIsPureScale) {
  const auto img = ramp(100, 100);
  const auto r = adr::resize_square(img, {adr::BBox(10, 20, 30, 40)}, 200);
  EXPECT_EQ(r.transform.scale, 2.0);
  EXPECT_EQ(r.transform.offset_x, 0.0);
  EXPECT_EQ(r.transform.offset_y, 0.0);
  EXPECT_EQ(r.boxes[0], adr::BBox(20, 40, 60, 80));
  const auto same = adr::resize_square(img, {}, 100);
  EXPECT_EQ(same.image.pixels, img.pixels);
}

TEST(Resize, LandscapePadsVertically) {
  const auto r = adr::resize_square(ramp(768, 572), {adr::BBox(0, 0, 768, 572)}, 640);
  const double s = 640.0 / 768.0;
  EXPECT_DOUBLE_EQ(r.transform.scale, s);
  EXPECT_DOUBLE_EQ(r.transform.offset_x, 0.0);
  EXPECT_DOUBLE_EQ(r.transform.offset_y, (640 - 572 * s) / 2);
  EXPECT_EQ(r.image.width, 640);
  EXPECT_EQ(r.image.height, 640);
  EXPECT_NEAR(r.boxes[0].y_min, (640 - 572 * s) / 2, 1e-9);
  EXPECT_NEAR(r.boxes[0].y_max, 640 - (640 - 572 * s) / 2, 1e-9);
}

TEST(Resize, RoundTripRecoversBoxes) {
  adr::Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const int w = rng.uniform_int(10, 900), h = rng.uniform_int(10, 900);
    const double x0 = rng.uniform(0, w), y0 = rng.uniform(0, h);
    const adr::BBox b(x0, y0, rng.uniform(x0, w), rng.uniform(y0, h));
    adr::ResizeTransform tr;
    tr.target = 640;
    tr.scale = 640.0 / std::max(w, h);
    tr.offset_x = (640 - w * tr.scale) / 2;
    tr.offset_y = (640 - h * tr.scale) / 2;
    const auto back = tr.invert(tr.apply(b));
    EXPECT_NEAR(back.x_min, b.x_min, 1e-6);
    EXPECT_NEAR(back.y_min, b.y_min, 1e-6);
    EXPECT_NEAR(back.x_max, b.x_max, 1e-6);
    EXPECT_NEAR(back.y_max, b.y_max, 1e-6);
  }
  EXPECT_THROW(adr::resize_square(adr::Image(), {}, 64), adr::DataError);
}

TEST(Augment, HflipMapsCoordinatesAndPixels) {
  const auto img = ramp(37, 21);
  const adr::BBox b(3, 4, 10, 9, 0);
  const auto f = adr::hflip(img, {b});
  EXPECT_EQ(f.boxes[0].x_min, 37 - 10);
  EXPECT_EQ(f.boxes[0].x_max, 37 - 3);
  EXPECT_EQ(f.boxes[0].y_min, 4);
  for (int y = 0; y < 21; ++y)
    for (int x = 0; x < 37; ++x) ASSERT_EQ(f.image.at(36 - x, y), img.at(x, y));
  const auto ff = adr::hflip(f.image, f.boxes);
  EXPECT_EQ(ff.image.pixels, img.pixels);
  EXPECT_EQ(ff.boxes[0], b);
}

TEST(Augment, VflipIsAnInvolution) {
  const auto img = ramp(12, 17);
  const adr::BBox b(1, 2, 5, 16, 0);
  const auto f = adr::vflip(img, {b});
  EXPECT_EQ(f.boxes[0].y_min, 1);
  EXPECT_EQ(f.boxes[0].y_max, 15);
  const auto ff = adr::vflip(f.image, f.boxes);
  EXPECT_EQ(ff.image.pixels, img.pixels);
  EXPECT_EQ(ff.boxes[0], b);
}

TEST(Augment, CropDropsBoxesWhoseCenterLeaves) {
  const auto img = ramp(50, 50);
  const auto c = adr::crop(img, {adr::BBox(5, 5, 15, 15), adr::BBox(30, 30, 48, 48)}, 10, 10, 30, 30);
  ASSERT_EQ(c.boxes.size(), 2u);
  EXPECT_EQ(c.boxes[0], adr::BBox(0, 0, 5, 5));
  EXPECT_EQ(c.boxes[1], adr::BBox(20, 20, 30, 30));
  const auto d = adr::crop(img, {adr::BBox(0, 0, 8, 8)}, 10, 10, 30, 30);
  EXPECT_TRUE(d.boxes.empty());
  EXPECT_EQ(c.image.at(0, 0), img.at(10, 10));
  EXPECT_THROW(adr::crop(img, {}, 30, 30, 30, 30), std::invalid_argument);
}

TEST(Augment, ScaleAboutCenterMovesBoxes) {
  const auto a = adr::scale_about_center(ramp(40, 40), {adr::BBox(10, 10, 30, 30)}, 0.5);
  ASSERT_EQ(a.boxes.size(), 1u);
  EXPECT_EQ(a.boxes[0], adr::BBox(15, 15, 25, 25));
}

TEST(Augment, PresetsAndDeterminism) {
  for (const std::string n : {"none", "HFlip", "HVFlip", "HVFlip+Crop", "HVFlip+Crop+scale"})
    EXPECT_EQ(adr::AugmentPolicy::preset(n).name(), n);
  EXPECT_THROW(adr::AugmentPolicy::preset("Rotate"), std::invalid_argument);
  const auto img = ramp(64, 64);
  const std::vector<adr::BBox> boxes{adr::BBox(10, 12, 30, 20, 0)};
  const auto p = adr::AugmentPolicy::preset("HVFlip+Crop+scale");
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = adr::augment(img, boxes, p, s), b = adr::augment(img, boxes, p, s);
    EXPECT_EQ(a.image.pixels, b.image.pixels);
    EXPECT_EQ(a.boxes, b.boxes);
    EXPECT_FALSE(a.boxes.empty());
  }
  const auto none = adr::augment(img, boxes, adr::AugmentPolicy::preset("none"), 1);
  EXPECT_EQ(none.image.pixels, img.pixels);
}

TEST(Stats, HeatmapAndHistogramMass) {
  adr::AnnotationRecord r;
  r.width = r.height = 100;
  r.boxes = {adr::BBox(10, 10, 20, 20), adr::BBox(0, 0, 40, 10), adr::BBox(50, 50, 50, 60), adr::BBox(0, 0, 100, 100)};
  const auto st = adr::dataset_stats({r}, 10);
  EXPECT_EQ(st.boxes, 4u);
  EXPECT_EQ(st.degenerate, 1u);
  EXPECT_EQ(st.heat(1, 1), 1u);  // center (15,15) on a 10x10 grid
  EXPECT_EQ(st.heat(2, 0), 1u);
  EXPECT_EQ(st.heat(5, 5), 1u);
  std::size_t heat = 0;
  for (auto c : st.heatmap) heat += c;
  EXPECT_EQ(heat, 3u);
  EXPECT_EQ(st.side.total(), 3u);
  EXPECT_EQ(st.ratio.total(), 3u);
  EXPECT_EQ(st.size_class.total(), 3u);
  EXPECT_EQ(st.size_class.counts[0], 2u);  // 100 and 400 px^2
  EXPECT_EQ(st.size_class.counts[1], 0u);
  EXPECT_EQ(st.size_class.counts[2], 1u);  // 10000 px^2
}

TEST(Stats, FiveNumberSummary) {
  const auto f = adr::five_number_summary({1, 2, 3, 4, 100});
  EXPECT_EQ(f.min, 1);
  EXPECT_EQ(f.q1, 2);
  EXPECT_EQ(f.median, 3);
  EXPECT_EQ(f.q3, 4);
  EXPECT_EQ(f.max, 100);
  ASSERT_EQ(f.outliers.size(), 1u);
  EXPECT_EQ(f.outliers[0], 100);
  EXPECT_EQ(f.whisker_high, 4);
}

TEST(Stats, HistogramBucketsAreHalfOpen) {
  adr::Histogram h({0, 1, 2, std::numeric_limits<double>::infinity()});
  h.add(0);
  h.add(1);
  h.add(1.999);
  h.add(50);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 2, 1}));
  EXPECT_EQ(h.mode(), 1u);
}
