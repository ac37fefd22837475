#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <set>
#include <sstream>

#include "pushbroom/pipeline.hpp"
#include "support.hpp"

using namespace pushbroom;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void synth(const std::string& scene_text, const fs::path& root) {
  write_synthetic_dataset(parse_scene(scene_text), root);
}

struct Row {
  std::size_t frame;
  int x, y;
  double zc, zw;
};

std::vector<Row> read_rows(const fs::path& csv) {
  std::istringstream in(io::read_text(csv));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line + "\n", detections_header());
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    EXPECT_EQ(f.size(), 11u) << line;
    rows.push_back({std::stoul(f[0]), std::stoi(f[1]), std::stoi(f[2]), std::stod(f[7]), std::stod(f[10])});
  }
  return rows;
}

RunConfig config_for(const fs::path& dataset, const fs::path& out) {
  RunConfig cfg;
  cfg.dataset = dataset;
  cfg.out = out;
  cfg.workers = 2;
  return cfg;
}

struct CliResult {
  int code;
  std::string err;
};

CliResult cli(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(PUSHBROOM_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, io::read_text(err)};
}

}  // namespace

TEST(Detect, PlaneAtWorkingDepth) {
  support::TempDir dir("det_plane");
  synth("preset = plane\n", dir.path() / "ds");
  const auto summary = run_detect(config_for(dir.path() / "ds", dir.path() / "out"));
  EXPECT_EQ(summary.frames, 1u);
  EXPECT_GT(summary.detections, 1000u);
  EXPECT_EQ(summary.cloud_points, summary.detections);
  const auto rows = read_rows(dir.path() / "out" / "detections.csv");
  ASSERT_EQ(rows.size(), summary.detections);
  for (const auto& r : rows) {
    EXPECT_EQ(r.frame, 0u);
    EXPECT_NEAR(r.zc, 4.8, 1e-6);
  }
  const auto cloud = io::read_ply(dir.path() / "out" / "cloud.ply");
  ASSERT_EQ(cloud.size(), rows.size());
  for (const auto& p : cloud) EXPECT_NEAR(p.z(), 4.8, 1e-5);
  EXPECT_FALSE(fs::exists(dir.path() / "out" / "overlays"));
}

// The plane starts 2 m beyond the working depth and reaches it on frame 2.
TEST(Detect, FiresOnlyWhenThePlaneIsAtWorkingDepth) {
  support::TempDir dir("det_fly");
  synth("obstacle = plane min=-1.2,-0.8,6.8 max=1.2,0.8,6.8 seed=5\nvelocity = 0,0,120\nn_frames = 3\n",
        dir.path() / "ds");
  run_detect(config_for(dir.path() / "ds", dir.path() / "out"));
  const auto rows = read_rows(dir.path() / "out" / "detections.csv");
  std::set<std::size_t> frames;
  for (const auto& r : rows) {
    frames.insert(r.frame);
    EXPECT_NEAR(r.zw, 6.8, 1e-5);
  }
  EXPECT_EQ(frames, std::set<std::size_t>{2});
  EXPECT_GT(rows.size(), 500u);
}

TEST(Detect, MissingDatasetWritesNothing) {
  support::TempDir dir("det_missing");
  const fs::path out = dir.path() / "out";
  EXPECT_THROW(run_detect(config_for(dir.path() / "none", out)), IoError);
  fs::create_directories(dir.path() / "empty" / "left");
  fs::create_directories(dir.path() / "empty" / "right");
  EXPECT_THROW(run_detect(config_for(dir.path() / "empty", out)), IoError);
  RunConfig bad = config_for(dir.path() / "none", out);
  bad.workers = 0;
  EXPECT_THROW(run_detect(bad), InvalidInput);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Detect, OutputIndependentOfWorkerCount) {
  support::TempDir dir("det_workers");
  synth("preset = corridor\nn_frames = 40\nposition_noise_m = 0.005\n", dir.path() / "ds");
  std::vector<std::string> csv, ply;
  for (std::size_t workers : {1u, 8u}) {
    auto cfg = config_for(dir.path() / "ds", dir.path() / ("out" + std::to_string(workers)));
    cfg.workers = workers;
    cfg.overlays = workers == 8;
    run_detect(cfg);
    csv.push_back(io::read_text(cfg.out / "detections.csv"));
    ply.push_back(io::read_text(cfg.out / "cloud.ply"));
  }
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_EQ(ply[0], ply[1]);
  EXPECT_GT(csv[0].size(), detections_header().size());
  EXPECT_TRUE(fs::exists(dir.path() / "out8" / "overlays" / "000039.png"));
}

TEST(Detect, SweepOffKeepsOnlyTheLastFrame) {
  support::TempDir dir("det_nosweep");
  synth("obstacle = plane min=-1.2,-0.8,4.8 max=1.2,0.8,4.8 seed=5\nvelocity = 0,0,0\nn_frames = 3\n",
        dir.path() / "ds");
  auto cfg = config_for(dir.path() / "ds", dir.path() / "on");
  const auto on = run_detect(cfg);
  cfg.sweep = false;
  cfg.out = dir.path() / "off";
  const auto off = run_detect(cfg);
  EXPECT_EQ(on.detections, off.detections);
  EXPECT_EQ(on.cloud_points, on.detections);
  EXPECT_EQ(off.cloud_points * 3, off.detections);
}

TEST(Benchmark, PlaneIsAllInTheFirstBin) {
  support::TempDir dir("bench_plane");
  synth("preset = plane\n", dir.path() / "ds");
  const auto report = run_benchmark(config_for(dir.path() / "ds", dir.path() / "out"));
  EXPECT_EQ(report.oracle_mask, "ground-truth");
  EXPECT_GT(report.detections, 1000u);
  EXPECT_EQ(report.per_frame.false_positive.counts[0], report.detections);
  EXPECT_EQ(report.per_frame.false_positive.total(), report.detections);
  EXPECT_EQ(report.per_frame.false_negative.counts[0], report.per_frame.false_negative.total());
  EXPECT_GT(report.per_frame.false_negative.total(), 1000u);

  const auto j = json::parse(io::read_text(dir.path() / "out" / "metrics.json"));
  for (const char* key : {"frames", "detections", "oracle_points", "oracle_mask", "per_frame", "sweep",
                          "random_baseline", "config"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["per_frame"]["false_positive"]["within_0.5m"].get<double>(), 1.0);
  EXPECT_EQ(j["per_frame"]["false_positive"]["bins"].size(), 6u);
  EXPECT_TRUE(j["random_baseline"].contains("per_frame"));
  EXPECT_EQ(j["config"]["disparity_px"], 20);
  EXPECT_DOUBLE_EQ(j["config"]["working_depth_m"].get<double>(), 4.8);
  EXPECT_FALSE(fs::exists(dir.path() / "out" / "raw_per_frame_false_positive.csv"));
}

TEST(Benchmark, RawDistancesAndNoSweep) {
  support::TempDir dir("bench_raw");
  synth("preset = plane\n", dir.path() / "ds");
  auto cfg = config_for(dir.path() / "ds", dir.path() / "out");
  cfg.raw_distances = true;
  cfg.sweep = false;
  const auto report = run_benchmark(cfg);
  EXPECT_FALSE(report.sweep.has_value());
  const auto j = json::parse(io::read_text(dir.path() / "out" / "metrics.json"));
  EXPECT_FALSE(j.contains("sweep"));
  const std::string raw = io::read_text(dir.path() / "out" / "raw_per_frame_false_positive.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(raw.begin(), raw.end(), '\n')), report.detections + 1);
  EXPECT_FALSE(fs::exists(dir.path() / "out" / "raw_sweep_false_positive.csv"));
}

TEST(Config, SettingsAndErrors) {
  RunConfig cfg;
  apply_config_text(cfg,
                    "workers = 3\nedge_threshold = 4000\ninvariance_offsets = -6,6\npose_source = velocity\n"
                    "velocity = 0,0,9\nfx = 310\n");
  EXPECT_EQ(cfg.workers, 3u);
  EXPECT_EQ(cfg.detector.edge_threshold, 4000u);
  EXPECT_EQ(cfg.detector.invariance_offsets, (std::vector<int>{-6, 6}));
  EXPECT_EQ(cfg.pose_source, PoseSource::ConstantVelocity);
  EXPECT_EQ(cfg.calibration_overrides.at("fx"), 310.0);
  try {
    apply_config_text(cfg, "sweep = on\n\nspeed = 3\n", "run.cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_STREQ(e.what(), "run.cfg line 3, field 'speed': unknown key");
  }
  EXPECT_THROW(apply_config_text(cfg, "workers = 0\n"), ParseError);
  EXPECT_THROW(apply_config_text(cfg, "pose_source = gps\n"), ParseError);
  RunConfig missing;
  EXPECT_THROW(load_config_file(missing, "/nonexistent/run.cfg"), IoError);
}

TEST(Config, FramePoses) {
  support::TempDir dir("poses");
  synth("preset = corridor\nn_frames = 6\n", dir.path() / "ds");
  auto ds = Dataset::open(dir.path() / "ds");
  RunConfig cfg;
  const auto logged = frame_poses(cfg, ds);
  ASSERT_EQ(logged.size(), 6u);
  EXPECT_NEAR(logged[4].position.z(), 4 * 9.0 / 120, 1e-9);

  // A pose log with fewer rows than frames is interpolated at k / fps.
  ds.poses = {ds.poses.front(), ds.poses.back()};
  const auto interp = frame_poses(cfg, ds);
  EXPECT_NEAR(interp[2].position.z(), 2 * 9.0 / 120, 1e-6);
  EXPECT_NEAR(interp[5].position.z(), 5 * 9.0 / 120, 1e-6);

  cfg.pose_source = PoseSource::ConstantVelocity;
  cfg.velocity = {0, 0, 6};
  cfg.fps = 60;
  const auto integrated = frame_poses(cfg, ds);
  EXPECT_EQ(integrated[0].position, Vec3::Zero());
  EXPECT_NEAR(integrated[3].position.z(), 0.3, 1e-12);
  EXPECT_NEAR(integrated[3].t, 0.05, 1e-12);
}

TEST(Config, DisparityAndCalibrationOverrides) {
  support::TempDir dir("override");
  synth("preset = plane\n", dir.path() / "ds");
  auto cfg = config_for(dir.path() / "ds", dir.path() / "out");
  apply_config_text(cfg, "disparity_px = 16\nbaseline_m = 0.3\n");
  const auto run = prepare_run(cfg);
  EXPECT_EQ(run.detector.disparity, 16);
  EXPECT_EQ(run.calib.baseline, 0.3);
  EXPECT_EQ(run.calib.fx, 300.0);
  apply_config_text(cfg, "disparity_px = 0\n");
  EXPECT_THROW(prepare_run(cfg), InvalidInput);
}

TEST(Synth, SameSeedSameBytes) {
  support::TempDir dir("synth");
  io::write_text(dir.path() / "a.scene", "preset = clutter\nn_frames = 2\nbackground_noise = 4\n");
  RunConfig cfg;
  cfg.scene = dir.path() / "a.scene";
  for (const char* out : {"x", "y"}) {
    cfg.out = dir.path() / out;
    cfg.seed = 77;
    EXPECT_EQ(run_synth(cfg), 2u);
  }
  for (const char* rel : {"left/000001.pgm", "right/000001.pgm", "poses.csv", "ground_truth/000001_surface.pgm"})
    EXPECT_EQ(io::read_text(dir.path() / "x" / rel), io::read_text(dir.path() / "y" / rel)) << rel;
  cfg.out = dir.path() / "z";
  cfg.seed = 78;
  run_synth(cfg);
  EXPECT_NE(io::read_text(dir.path() / "x" / "left/000001.pgm"), io::read_text(dir.path() / "z" / "left/000001.pgm"));
  cfg.scene = dir.path() / "missing.scene";
  EXPECT_THROW(run_synth(cfg), IoError);
}

TEST(Cli, ExitCodesAndMessages) {
  support::TempDir dir("cli");
  const std::string d = dir.path().string();
  EXPECT_EQ(cli("", dir.path()).code, 2);
  auto r = cli("detect --dataset " + d + "/none --out " + d + "/out", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: io-error: dataset directory not found", 0), 0u) << r.err;
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
  r = cli("detect --dataset x --out y --invariance-filter maybe", dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: usage:", 0), 0u) << r.err;
  r = cli("detect --dataset x --out y --set workers", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: parse-error:", 0), 0u) << r.err;
  io::write_text(dir.path() / "bad.scene", "preset = plane\nobstacle = plane min=0,0,4 max=1,1,5\n");
  r = cli("synth --scene " + d + "/bad.scene --out " + d + "/s", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2, field 'obstacle'"), std::string::npos) << r.err;
}

// Config file < flags < --set, observed through the config echo in metrics.json.
TEST(Cli, SettingPrecedence) {
  support::TempDir dir("cli_prec");
  const std::string d = dir.path().string();
  ASSERT_EQ(cli("synth --scene " + std::string(PUSHBROOM_SOURCE_DIR) + "/tools/scenes/plane.scene --out " + d +
                    "/ds",
                dir.path())
                .code,
            0);
  io::write_text(dir.path() / "run.cfg", "seed = 5\ninvariance_filter = off\nedge_threshold = 4500\nworkers = 2\n");
  const auto r = cli("benchmark --config " + d + "/run.cfg --dataset " + d + "/ds --out " + d +
                         "/out --seed 6 --invariance-filter on --set seed=7 --set score_threshold=0.03",
                     dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(io::read_text(dir.path() / "out" / "metrics.json"));
  EXPECT_EQ(j["config"]["seed"], 7);
  EXPECT_EQ(j["config"]["invariance_filter"], true);
  EXPECT_EQ(j["config"]["edge_threshold"], 4500);
  EXPECT_DOUBLE_EQ(j["config"]["score_threshold"].get<double>(), 0.03);
}

TEST(Cli, BenchmarkIndependentOfWorkerCount) {
  support::TempDir dir("cli_workers");
  const std::string d = dir.path().string();
  synth("preset = corridor\nn_frames = 12\n", dir.path() / "ds");
  for (const char* w : {"1", "8"})
    ASSERT_EQ(cli(std::string("benchmark --dataset ") + d + "/ds --out " + d + "/out" + w + " --workers " + w,
                  dir.path())
                  .code,
              0);
  EXPECT_EQ(io::read_text(dir.path() / "out1" / "metrics.json"), io::read_text(dir.path() / "out8" / "metrics.json"));
}
