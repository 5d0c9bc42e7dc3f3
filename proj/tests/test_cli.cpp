// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adr/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome adr_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = adr::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("adr_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(adr_run({"--help"}).code, 0);
  EXPECT_EQ(adr_run({"--version"}).code, 0);
  EXPECT_EQ(adr_run({}).code, 1);
  EXPECT_EQ(adr_run({"frobnicate"}).code, 1);
  EXPECT_EQ(adr_run({"lr-curve", "--bogus"}).code, 1);
  EXPECT_EQ(adr_run({"synth", "--count", "3"}).code, 1);  // --out missing
  const auto r = adr_run({"eval", "--gt", "/nonexistent.json", "--det", "/nonexistent.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  EXPECT_EQ(adr_run({"eval"}).code, 1);
  EXPECT_EQ(adr_run({"train", "--data", "/nonexistent", "--out", "/tmp/x", "--set", "nope=1"}).code, 1);
}

TEST(Cli, LrCurveRows) {
  const fs::path dir = scratch("lr");
  const auto r = adr_run({"lr-curve", "--kind", "cosine", "--alpha0", "0.01", "--epochs", "100", "--out",
                          (dir / "lr.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir / "lr.csv"));
  ASSERT_EQ(rows.size(), 102u);
  EXPECT_EQ(rows[0], "epoch,lr");
  EXPECT_EQ(rows[1], "0,0.01");
  EXPECT_EQ(rows[101], "100,0");
  EXPECT_EQ(std::stod(rows[51].substr(3)), 0.005);
  EXPECT_TRUE(fs::exists(dir / "lr.svg"));
  EXPECT_TRUE(fs::exists(dir / "lr.csv.manifest.json"));
  const auto step = adr_run({"lr-curve", "--kind", "step", "--alpha0", "0.1", "--gamma", "0.5", "--step-width", "10",
                             "--epochs", "30", "--out", (dir / "step.csv").string()});
  ASSERT_EQ(step.code, 0);
  const auto srows = lines(slurp(dir / "step.csv"));
  EXPECT_EQ(std::stod(srows[21].substr(3)), 0.1 * 0.5 * 0.5);
  EXPECT_EQ(adr_run({"lr-curve", "--kind", "linear", "--out", (dir / "x.csv").string()}).code, 1);
  fs::remove_all(dir);
}

TEST(Cli, AnchorsDump) {
  const fs::path dir = scratch("anchors");
  const auto r = adr_run({"anchors", "--size", "640", "--out", (dir / "a.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir / "a.csv"));
  EXPECT_EQ(rows.size(), 1u + (80 * 80 + 40 * 40 + 20 * 20) * 25);
  EXPECT_EQ(rows[0], "level,cx,cy,w,h");
  const auto m = nlohmann::json::parse(slurp(dir / "a.csv.manifest.json"));
  EXPECT_EQ(m["total_anchors"], 210000);
  EXPECT_EQ(m["command"], "anchors");
  fs::remove_all(dir);
}

TEST(Cli, EvalFromFilesPrintsTwelveLines) {
  const fs::path dir = scratch("evalfiles");
  std::ofstream(dir / "gt.csv") << "image_id,label,score,x_min,y_min,x_max,y_max\na,0,,0,0,10,10\nb,,,,,,\n";
  std::ofstream(dir / "det.json")
      << R"({"boxes":[{"image_id":"a","label":0,"score":0.9,"x_min":0,"y_min":0,"x_max":10,"y_max":10}]})";
  const auto r = adr_run({"eval", "--gt", (dir / "gt.csv").string(), "--det", (dir / "det.json").string(), "--out",
                          (dir / "rep").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 12u);
  EXPECT_EQ(l[1], "Average Precision  (AP) @[ IoU=0.50      | area=   all | maxDets=100 ] = 1.000");
  EXPECT_EQ(slurp(dir / "rep" / "report.txt"), r.out);
  const auto j = nlohmann::json::parse(slurp(dir / "rep" / "report.json"));
  EXPECT_EQ(j["AP50"], 1.0);
  EXPECT_EQ(j["AP_medium"], -1.0);
  // Detections without scores are rejected.
  std::ofstream(dir / "noscore.csv") << "image_id,label,score,x_min,y_min,x_max,y_max\na,0,,0,0,10,10\n";
  EXPECT_EQ(adr_run({"eval", "--gt", (dir / "gt.csv").string(), "--det", (dir / "noscore.csv").string()}).code, 1);
  fs::remove_all(dir);
}

TEST(Cli, ReplayReproducesOutputsByteForByte) {
  const fs::path dir = scratch("replay");
  ASSERT_EQ(adr_run({"synth", "--out", (dir / "ds").string(), "--count", "12", "--seed", "4", "--series-size", "5"}).code,
            0);
  ASSERT_EQ(adr_run({"stats", "--data", (dir / "ds").string(), "--out", (dir / "st").string()}).code, 0);
  const std::string stats = slurp(dir / "st" / "stats.json");
  const std::string manifest = slurp(dir / "st" / "manifest.json");
  const std::string gt = slurp(dir / "ds" / "C0002" / "ground_truth.txt");
  fs::remove_all(dir / "st");
  fs::remove_all(dir / "ds");
  ASSERT_EQ(adr_run({"replay", "--manifest", (dir / "cfg_missing.json").string()}).code, 1);
  // Recreate the dataset from its own manifest, then the statistics from theirs.
  std::ofstream(dir / "synth.json")
      << nlohmann::json{{"argv", {"synth", "--out", (dir / "ds").string(), "--count", "12", "--seed", "4",
                                  "--series-size", "5"}}}
             .dump();
  ASSERT_EQ(adr_run({"replay", "--manifest", (dir / "synth.json").string()}).code, 0);
  EXPECT_EQ(slurp(dir / "ds" / "C0002" / "ground_truth.txt"), gt);
  std::ofstream(dir / "stats_manifest.json") << manifest;
  ASSERT_EQ(adr_run({"replay", "--manifest", (dir / "stats_manifest.json").string()}).code, 0);
  EXPECT_EQ(slurp(dir / "st" / "stats.json"), stats);
  EXPECT_EQ(slurp(dir / "st" / "manifest.json"), manifest);
  fs::remove_all(dir);
}

TEST(Cli, SynthTrainEvalSmoke) {
  const fs::path dir = scratch("smoke");
  const std::string ds = (dir / "ds").string(), run = (dir / "run").string();
  ASSERT_EQ(adr_run({"synth", "--out", ds, "--seed", "7", "--count", "200"}).code, 0);
  const auto st = adr_run({"stats", "--data", ds, "--out", (dir / "stats").string()});
  ASSERT_EQ(st.code, 0) << st.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "stats" / "stats.json"))["images"], 200);
  const auto tr = adr_run({"train", "--preset", "desk", "--data", ds, "--out", run, "--quiet", "--set",
                           "iterations=60", "--set", "eval_every=30"});
  ASSERT_EQ(tr.code, 0) << tr.err;
  for (const char* f : {"checkpoint.adr", "config.txt", "train_log.csv", "eval_log.json", "split.json", "loss.svg",
                        "manifest.json"})
    EXPECT_TRUE(fs::exists(fs::path(run) / f)) << f;
  const auto split = nlohmann::json::parse(slurp(fs::path(run) / "split.json"));
  EXPECT_EQ(split["test"].size(), 40u);
  EXPECT_EQ(split["train"].size(), 160u);
  EXPECT_EQ(lines(slurp(fs::path(run) / "train_log.csv")).size(), 61u);
  const auto evals = nlohmann::json::parse(slurp(fs::path(run) / "eval_log.json"));
  ASSERT_EQ(evals.size(), 2u);

  const auto ev = adr_run({"eval", "--checkpoint", run + "/checkpoint.adr", "--data", ds, "--out",
                           (dir / "eval").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto rep = nlohmann::json::parse(slurp(dir / "eval" / "report.json"));
  // Reloading the checkpoint reproduces the final in-training evaluation.
  EXPECT_EQ(rep["AP50"], evals.back()["metrics"]["AP50"]);
  EXPECT_EQ(rep["AP"], evals.back()["metrics"]["AP"]);

  const auto inf = adr_run({"infer", "--checkpoint", run + "/checkpoint.adr", "--image", ds + "/C0001/C0001_0001.pgm",
                            "--threshold", "0.05", "--out", (dir / "det.json").string()});
  ASSERT_EQ(inf.code, 0) << inf.err;
  EXPECT_NO_THROW(adr::read_boxset(dir / "det.json"));
  EXPECT_EQ(adr_run({"infer", "--checkpoint", (dir / "nope.adr").string(), "--image", ds, "--out",
                     (dir / "x.json").string()})
                .code,
            1);
  fs::remove_all(dir);
}

TEST(Cli, ProcessExitCodes) {
  const std::string tool = ADR_TOOL_PATH;
  ASSERT_TRUE(fs::exists(tool)) << tool;
  const auto status = [&](const std::string& a) {
    const int s = std::system((tool + " " + a + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status("no-such-command"), 1);
  EXPECT_EQ(status("eval --gt /nonexistent.csv --det /nonexistent.csv"), 1);
}
