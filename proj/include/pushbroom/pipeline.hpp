#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pushbroom/dataset.hpp"
#include "pushbroom/eval.hpp"
#include "pushbroom/io.hpp"
#include "pushbroom/oracle.hpp"
#include "pushbroom/overlay.hpp"
#include "pushbroom/pushbroom.hpp"
#include "pushbroom/sweep.hpp"
#include "pushbroom/worker_pool.hpp"

namespace pushbroom {

enum class PoseSource { Log, ConstantVelocity };

/// Everything a detect/benchmark/synth run needs. Calibration and disparity
/// come from the dataset unless overridden here.
struct RunConfig {
  fs::path dataset;
  fs::path out;
  fs::path scene;
  std::size_t workers = 8;
  bool overlays = false;
  bool sweep = true;
  std::optional<std::uint64_t> seed;

  PushbroomConfig detector;
  std::optional<int> disparity;
  std::map<std::string, double> calibration_overrides;

  PoseSource pose_source = PoseSource::Log;
  double fps = 120.0;
  Vec3 velocity{0.0, 0.0, 9.0};
  Vec3 angular_velocity = Vec3::Zero();
  SweepPolicy sweep_policy;

  BlockMatchParams oracle;
  double depth_crop_tolerance_m = 0.5;
  double random_near_m = 1.0;
  double random_far_m = 10.0;
  bool raw_distances = false;

  void validate() const {
    if (workers < 1) throw InvalidInput("workers must be >= 1");
    if (!(fps > 0.0)) throw InvalidInput("fps must be positive");
    if (!(sweep_policy.retention_s > 0.0)) throw InvalidInput("retention_s must be positive");
    if (!(depth_crop_tolerance_m > 0.0)) throw InvalidInput("depth_crop_tolerance_m must be positive");
    if (!(random_near_m > 0.0) || !(random_far_m > random_near_m))
      throw InvalidInput("random bounds must satisfy 0 < near < far");
  }
};

/// Applies one `key=value` setting; used for config files and `--set`.
inline void apply_setting(RunConfig& cfg, const io::KeyValue& kv) {
  const std::string& k = kv.key;
  auto positive_size = [&] {
    const long long v = io::parse_int(kv);
    if (v < 1) throw ParseError(io::field_error(kv, "must be >= 1"));
    return static_cast<std::size_t>(v);
  };
  if (k == "dataset") cfg.dataset = kv.value;
  else if (k == "out") cfg.out = kv.value;
  else if (k == "scene") cfg.scene = kv.value;
  else if (k == "workers") cfg.workers = positive_size();
  else if (k == "overlays") cfg.overlays = io::parse_bool(kv);
  else if (k == "sweep") cfg.sweep = io::parse_bool(kv);
  else if (k == "seed") cfg.seed = io::parse_u64(kv);
  else if (k == "disparity_px") cfg.disparity = static_cast<int>(io::parse_int(kv));
  else if (k == "edge_threshold") cfg.detector.edge_threshold = static_cast<std::uint32_t>(io::parse_u64(kv));
  else if (k == "score_threshold") cfg.detector.score_threshold = io::parse_double(kv);
  else if (k == "invariance_filter") cfg.detector.invariance_filter = io::parse_bool(kv);
  else if (k == "invariance_offsets") cfg.detector.invariance_offsets = io::parse_int_list(kv);
  else if (k == "invariance_score_threshold") cfg.detector.invariance_score_threshold = io::parse_double(kv);
  else if (k == "scan_stride") cfg.detector.scan_stride = static_cast<int>(positive_size());
  else if (k == "fx" || k == "fy" || k == "cx" || k == "cy" || k == "baseline_m")
    cfg.calibration_overrides[k] = io::parse_double(kv);
  else if (k == "pose_source") {
    if (kv.value == "log") cfg.pose_source = PoseSource::Log;
    else if (kv.value == "velocity") cfg.pose_source = PoseSource::ConstantVelocity;
    else throw ParseError(io::field_error(kv, "expected log or velocity"));
  } else if (k == "fps") cfg.fps = io::parse_double(kv);
  else if (k == "velocity") cfg.velocity = io::parse_vec3(kv);
  else if (k == "angular_velocity") cfg.angular_velocity = io::parse_vec3(kv);
  else if (k == "retention_s") cfg.sweep_policy.retention_s = io::parse_double(kv);
  else if (k == "behind_margin_m") cfg.sweep_policy.behind_margin_m = io::parse_double(kv);
  else if (k == "oracle_min_disparity") cfg.oracle.min_disparity = static_cast<int>(io::parse_int(kv));
  else if (k == "oracle_max_disparity") cfg.oracle.max_disparity = static_cast<int>(io::parse_int(kv));
  else if (k == "oracle_edge_threshold") cfg.oracle.edge_threshold = static_cast<std::uint32_t>(io::parse_u64(kv));
  else if (k == "uniqueness_ratio") cfg.oracle.uniqueness_ratio = io::parse_double(kv);
  else if (k == "depth_crop_tolerance_m") cfg.depth_crop_tolerance_m = io::parse_double(kv);
  else if (k == "random_near_m") cfg.random_near_m = io::parse_double(kv);
  else if (k == "random_far_m") cfg.random_far_m = io::parse_double(kv);
  else if (k == "raw_distances") cfg.raw_distances = io::parse_bool(kv);
  else throw ParseError(io::field_error(kv, "unknown key"));
}

inline void apply_config_text(RunConfig& cfg, std::string_view text, std::string_view source = "config") {
  for (const auto& kv : io::parse_key_values(text, source)) {
    try {
      apply_setting(cfg, kv);
    } catch (const ParseError& e) {
      throw ParseError(std::string(source) + " " + e.what());
    }
  }
}

inline void load_config_file(RunConfig& cfg, const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  apply_config_text(cfg, io::read_text(path), path.filename().string());
}

/// Dataset plus everything derived from it before the first frame is touched.
struct PreparedRun {
  Dataset dataset;
  StereoCalibration calib;
  PushbroomConfig detector;
  std::vector<Pose> poses;  ///< one per frame
};

/// Frame poses: the dataset's pose log when present and selected (its own
/// timestamps when it has one row per frame, otherwise interpolated at k/fps),
/// else constant-velocity integration from the identity pose.
inline std::vector<Pose> frame_poses(const RunConfig& cfg, const Dataset& ds) {
  std::vector<Pose> out;
  out.reserve(ds.frame_count);
  if (cfg.pose_source == PoseSource::Log && !ds.poses.empty()) {
    if (ds.poses.size() == ds.frame_count) {
      for (const auto& p : ds.poses) p.validate();
      return ds.poses;
    }
    const PoseTrack track(ds.poses);
    const double t0 = track.poses().front().t;
    for (std::size_t k = 0; k < ds.frame_count; ++k) out.push_back(track.at(t0 + static_cast<double>(k) / cfg.fps));
    return out;
  }
  Pose pose;
  for (std::size_t k = 0; k < ds.frame_count; ++k) {
    out.push_back(pose);
    pose = integrate_constant_velocity(pose, cfg.velocity, cfg.angular_velocity, 1.0 / cfg.fps);
  }
  return out;
}

inline PreparedRun prepare_run(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.dataset.empty()) throw InvalidInput("no dataset given");
  if (cfg.out.empty()) throw InvalidInput("no output directory given");
  PreparedRun run{Dataset::open(cfg.dataset), {}, cfg.detector, {}};
  run.calib = run.dataset.calib.stereo;
  for (const auto& [key, value] : cfg.calibration_overrides) {
    if (key == "fx") run.calib.fx = value;
    else if (key == "fy") run.calib.fy = value;
    else if (key == "cx") run.calib.cx = value;
    else if (key == "cy") run.calib.cy = value;
    else if (key == "baseline_m") run.calib.baseline = value;
  }
  run.calib.validate();
  run.detector.disparity = cfg.disparity.value_or(run.dataset.calib.disparity);
  run.detector.validate();
  run.poses = frame_poses(cfg, run.dataset);
  return run;
}

inline std::string detections_header() { return "frame,x_px,y_px,score,edge_sum,Xc,Yc,Zc,Xw,Yw,Zw\n"; }

inline void append_detection_rows(std::string& out, std::size_t frame, std::span<const Detection> dets,
                                  const Pose& pose) {
  for (const auto& d : dets) {
    const Vec3 w = transform_to_world(pose, d.point_camera);
    out += io::format("%zu,%d,%d,%.6f,%u,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", frame, d.x, d.y, d.score,
                      static_cast<unsigned>(d.edge_sum), d.point_camera.x(), d.point_camera.y(),
                      d.point_camera.z(), w.x(), w.y(), w.z());
  }
}

struct StageTimes {
  double load_s = 0.0;
  double detect_s = 0.0;
  double sweep_s = 0.0;
  double overlay_s = 0.0;
  double write_s = 0.0;
};

struct DetectSummary {
  std::size_t frames = 0;
  std::size_t detections = 0;
  std::size_t cloud_points = 0;
  StageTimes times;

  /// Frame pairs per second through process_frame alone.
  double detect_fps() const { return times.detect_s > 0.0 ? static_cast<double>(frames) / times.detect_s : 0.0; }
  double pipeline_fps() const {
    const double total = times.load_s + times.detect_s + times.sweep_s + times.overlay_s + times.write_s;
    return total > 0.0 ? static_cast<double>(frames) / total : 0.0;
  }
};

inline std::string format_summary(const DetectSummary& s) {
  const double n = s.frames ? static_cast<double>(s.frames) : 1.0;
  std::string out = io::format("frames=%zu detections=%zu cloud_points=%zu\n", s.frames, s.detections, s.cloud_points);
  out += io::format("process_frame_fps=%.1f pipeline_fps=%.1f\n", s.detect_fps(), s.pipeline_fps());
  out += io::format("ms_per_frame load=%.3f detect=%.3f sweep=%.3f overlay=%.3f write=%.3f\n",
                    1e3 * s.times.load_s / n, 1e3 * s.times.detect_s / n, 1e3 * s.times.sweep_s / n,
                    1e3 * s.times.overlay_s / n, 1e3 * s.times.write_s / n);
  return out;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline std::vector<Vec3> world_points(const ObstacleCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points()) out.push_back(p.world);
  return out;
}

}  // namespace detail

/// Runs the detector with sweep memory over every frame. Writes
/// detections.csv, cloud.ply (memory after the last frame) and optional
/// overlays/NNNNNN.png under cfg.out.
inline DetectSummary run_detect(const RunConfig& cfg) {
  using detail::Clock;
  const PreparedRun run = prepare_run(cfg);
  fs::create_directories(cfg.out);
  if (cfg.overlays) fs::create_directories(cfg.out / "overlays");

  std::ofstream csv(cfg.out / "detections.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (cfg.out / "detections.csv").string());
  csv << detections_header();

  WorkerPool pool(cfg.workers);
  ObstacleCloud cloud;
  DetectSummary summary;
  std::string rows;
  for (std::size_t k = 0; k < run.dataset.frame_count; ++k) {
    auto t = Clock::now();
    const auto [left, right] = run.dataset.load_pair(k);
    summary.times.load_s += detail::seconds_since(t);

    t = Clock::now();
    const auto dets = process_frame(left, right, run.detector, run.calib, &pool);
    summary.times.detect_s += detail::seconds_since(t);

    t = Clock::now();
    const Pose& pose = run.poses[k];
    if (!cfg.sweep) cloud = ObstacleCloud{};
    sweep_update(cloud, dets, pose, k, cfg.sweep_policy);
    summary.times.sweep_s += detail::seconds_since(t);

    if (cfg.overlays) {
      t = Clock::now();
      write_png(cfg.out / "overlays" / io::frame_name(k, ".png"),
                render_overlay(left, dets, cloud.points(), pose, run.calib));
      summary.times.overlay_s += detail::seconds_since(t);
    }

    t = Clock::now();
    rows.clear();
    append_detection_rows(rows, k, dets, pose);
    csv << rows;
    summary.times.write_s += detail::seconds_since(t);
    summary.detections += dets.size();
    ++summary.frames;
  }
  csv.close();
  if (!csv) throw IoError("failed writing detections.csv");
  const auto t = Clock::now();
  io::write_ply(cfg.out / "cloud.ply", detail::world_points(cloud));
  summary.times.write_s += detail::seconds_since(t);
  summary.cloud_points = cloud.size();
  return summary;
}

/// FP/FN histogram pair for one comparison.
struct MetricPair {
  DistanceHistogram false_positive;
  DistanceHistogram false_negative;
};

struct BenchmarkReport {
  std::size_t frames = 0;
  std::size_t detections = 0;
  std::size_t oracle_points = 0;
  std::string oracle_mask;  ///< "ground-truth", "polygons" or "none"
  MetricPair per_frame;
  std::optional<MetricPair> sweep;
  MetricPair random_per_frame;
  std::optional<MetricPair> random_sweep;
  nlohmann::ordered_json config;
};

inline nlohmann::ordered_json histogram_json(const DistanceHistogram& h) {
  nlohmann::ordered_json j;
  const auto labels = DistanceHistogram::labels();
  const auto fractions = h.fractions();
  j["bins"] = std::vector<std::string>(labels.begin(), labels.end());
  j["counts"] = std::vector<std::uint64_t>(h.counts.begin(), h.counts.end());
  j["fractions"] = std::vector<double>(fractions.begin(), fractions.end());
  j["total"] = h.total();
  j["within_0.5m"] = h.fraction_within(0.5);
  j["within_1.0m"] = h.fraction_within(1.0);
  j["within_2.0m"] = h.fraction_within(2.0);
  return j;
}

inline nlohmann::ordered_json metric_pair_json(const MetricPair& m) {
  nlohmann::ordered_json j;
  j["false_positive"] = histogram_json(m.false_positive);
  j["false_negative"] = histogram_json(m.false_negative);
  return j;
}

inline nlohmann::ordered_json config_json(const RunConfig& cfg, const PreparedRun& run) {
  nlohmann::ordered_json j;
  j["sweep"] = cfg.sweep;
  j["seed"] = cfg.seed.value_or(1);
  j["fx"] = run.calib.fx;
  j["fy"] = run.calib.fy;
  j["cx"] = run.calib.cx;
  j["cy"] = run.calib.cy;
  j["baseline_m"] = run.calib.baseline;
  j["disparity_px"] = run.detector.disparity;
  j["working_depth_m"] = depth_for(run.calib, run.detector.disparity);
  j["edge_threshold"] = run.detector.edge_threshold;
  j["score_threshold"] = run.detector.score_threshold;
  j["invariance_filter"] = run.detector.invariance_filter;
  j["invariance_offsets"] = run.detector.invariance_offsets;
  j["invariance_score_threshold"] = run.detector.effective_invariance_threshold();
  j["scan_stride"] = run.detector.scan_stride;
  j["pose_source"] = cfg.pose_source == PoseSource::Log && !run.dataset.poses.empty() ? "log" : "velocity";
  j["fps"] = cfg.fps;
  j["retention_s"] = cfg.sweep_policy.retention_s;
  j["behind_margin_m"] = cfg.sweep_policy.behind_margin_m;
  j["oracle_min_disparity"] = cfg.oracle.min_disparity;
  j["oracle_max_disparity"] = cfg.oracle.max_disparity;
  j["oracle_edge_threshold"] = cfg.oracle.edge_threshold;
  j["uniqueness_ratio"] = cfg.oracle.uniqueness_ratio;
  j["depth_crop_tolerance_m"] = cfg.depth_crop_tolerance_m;
  j["random_near_m"] = cfg.random_near_m;
  j["random_far_m"] = cfg.random_far_m;
  return j;
}

inline nlohmann::ordered_json report_json(const BenchmarkReport& r) {
  nlohmann::ordered_json j;
  j["frames"] = r.frames;
  j["detections"] = r.detections;
  j["oracle_points"] = r.oracle_points;
  j["oracle_mask"] = r.oracle_mask;
  j["per_frame"] = metric_pair_json(r.per_frame);
  if (r.sweep) j["sweep"] = metric_pair_json(*r.sweep);
  j["random_baseline"]["per_frame"] = metric_pair_json(r.random_per_frame);
  if (r.random_sweep) j["random_baseline"]["sweep"] = metric_pair_json(*r.random_sweep);
  j["config"] = r.config;
  return j;
}

namespace detail {

inline void write_raw(const fs::path& path, const std::vector<double>& values) {
  std::string out = "distance_m\n";
  for (double v : values) out += io::format("%.6f\n", v);
  io::write_text(path, out);
}

inline void transform_all(const Pose& pose, std::vector<Vec3>& pts) {
  for (auto& p : pts) p = transform_to_world(pose, p);
}

}  // namespace detail

/// Remembered points the current view can check against the oracle: in
/// front of the camera within the oracle's depth range, and with a full
/// block around the projection in both the left and the right image.
inline std::vector<Vec3> verifiable_points(std::span<const CloudPoint> memory, const Pose& pose,
                                           const StereoCalibration& calib, int width, int height,
                                           double near, double far) {
  constexpr double half = kBlockSize / 2;
  std::vector<Vec3> out;
  for (const auto& p : memory) {
    const Vec3 c = transform_to_camera(pose, p.world);
    if (c.z() < near || c.z() > far) continue;
    const auto px = reproject(calib, c);
    if (!px) continue;
    const double right_x = px->x - disparity_for(calib, c.z());
    if (right_x >= half && px->x <= width - 1 - half && px->y >= half && px->y <= height - 1 - half)
      out.push_back(p.world);
  }
  return out;
}

/// Detector against the full block matcher on every frame.
///
/// per_frame: this frame's detections against this frame's oracle points
/// cropped to the working depth.
/// sweep: at every frame, remembered detections the view can verify against
/// all of this frame's oracle points (false positives), and this frame's
/// oracle points at or inside the working depth against all remembered
/// detections (false negatives).
///
/// Oracle points are restricted to obstacle pixels using ground truth or
/// masks.txt when either is available. The random baseline replays the same
/// per-frame counts and memory policy. Writes metrics.json.
inline BenchmarkReport run_benchmark(const RunConfig& cfg) {
  const PreparedRun run = prepare_run(cfg);
  if (cfg.oracle.min_disparity > run.detector.disparity || cfg.oracle.max_disparity < run.detector.disparity)
    throw InvalidInput("oracle disparity range must contain the working disparity");
  if (cfg.oracle.min_disparity < 1) throw InvalidInput("oracle_min_disparity must be >= 1 for the benchmark");
  fs::create_directories(cfg.out);

  WorkerPool pool(cfg.workers);
  const Dataset& ds = run.dataset;
  const double working_depth = depth_for(run.calib, run.detector.disparity);
  const double oracle_near = depth_for(run.calib, cfg.oracle.max_disparity);
  const double oracle_far = depth_for(run.calib, cfg.oracle.min_disparity);
  // Oracle disparity >= working disparity: the detector has had its chance.
  const double swept_depth = working_depth * (1.0 + 1e-9);
  BenchmarkReport report;
  report.oracle_mask = ds.has_ground_truth ? "ground-truth" : ds.masks ? "polygons" : "none";
  report.config = config_json(cfg, run);
  if (cfg.sweep) {
    report.sweep.emplace();
    report.random_sweep.emplace();
  }

  std::vector<double> raw[4];
  auto sink = [&](int i) { return cfg.raw_distances ? &raw[i] : nullptr; };

  ObstacleCloud memory, random_memory;
  SplitMix64 frame_seeds(cfg.seed.value_or(1));
  for (std::size_t k = 0; k < ds.frame_count; ++k) {
    const auto [left, right] = ds.load_pair(k);
    const Pose& pose = run.poses[k];
    const auto dets = process_frame(left, right, run.detector, run.calib, &pool);
    std::vector<Vec3> detected;
    detected.reserve(dets.size());
    for (const auto& d : dets) detected.push_back(transform_to_world(pose, d.point_camera));

    const FrustumBounds bounds{run.calib, left.width(), left.height(), cfg.random_near_m, cfg.random_far_m};
    const std::size_t count = dets.size();
    const std::vector<Vec3> random =
        random_baseline(std::span(&count, 1), std::span(&pose, 1), bounds, frame_seeds.next());

    const DisparityMap map = full_block_match(left, right, cfg.oracle, &pool);
    const auto surface = ds.load_surface(k);
    std::vector<Vec3> oracle_cam = matched_points(map, run.calib, [&](int bx, int by, int) {
      const int cx = bx + kBlockSize / 2, cy = by + kBlockSize / 2;
      if (surface) return (*surface)(cx, cy) != 0;
      if (ds.masks) return ds.masks->contains(k, cx, cy);
      return true;
    });
    std::vector<Vec3> cropped = depth_crop(oracle_cam, working_depth, cfg.depth_crop_tolerance_m);
    std::vector<Vec3> swept = oracle_cam;
    std::erase_if(swept, [&](const Vec3& p) { return p.z() > swept_depth; });
    detail::transform_all(pose, oracle_cam);
    detail::transform_all(pose, cropped);
    detail::transform_all(pose, swept);

    report.per_frame.false_positive.merge(false_positive_metric(detected, cropped, sink(0)));
    report.per_frame.false_negative.merge(false_negative_metric(cropped, detected, sink(1)));
    report.random_per_frame.false_positive.merge(false_positive_metric(random, cropped));
    report.random_per_frame.false_negative.merge(false_negative_metric(cropped, random));

    if (cfg.sweep) {
      sweep_update(memory, dets, pose, k, cfg.sweep_policy);
      for (const auto& p : random) random_memory.append(p, pose.t, k);
      random_memory.prune(pose, cfg.sweep_policy);
      const auto remembered = detail::world_points(memory);
      const auto random_remembered = detail::world_points(random_memory);
      const auto checkable = verifiable_points(memory.points(), pose, run.calib, left.width(), left.height(),
                                               oracle_near, oracle_far);
      const auto random_checkable = verifiable_points(random_memory.points(), pose, run.calib, left.width(),
                                                      left.height(), oracle_near, oracle_far);
      report.sweep->false_positive.merge(false_positive_metric(checkable, oracle_cam, sink(2)));
      report.sweep->false_negative.merge(false_negative_metric(swept, remembered, sink(3)));
      report.random_sweep->false_positive.merge(false_positive_metric(random_checkable, oracle_cam));
      report.random_sweep->false_negative.merge(false_negative_metric(swept, random_remembered));
    }

    report.detections += dets.size();
    report.oracle_points += oracle_cam.size();
    ++report.frames;
  }

  io::write_text(cfg.out / "metrics.json", report_json(report).dump(2) + "\n");
  if (cfg.raw_distances) {
    detail::write_raw(cfg.out / "raw_per_frame_false_positive.csv", raw[0]);
    detail::write_raw(cfg.out / "raw_per_frame_false_negative.csv", raw[1]);
    if (cfg.sweep) {
      detail::write_raw(cfg.out / "raw_sweep_false_positive.csv", raw[2]);
      detail::write_raw(cfg.out / "raw_sweep_false_negative.csv", raw[3]);
    }
  }
  return report;
}

/// Renders the scene file named by cfg.scene into cfg.out.
inline std::size_t run_synth(const RunConfig& cfg) {
  if (cfg.scene.empty()) throw InvalidInput("no scene file given");
  if (cfg.out.empty()) throw InvalidInput("no output directory given");
  if (!fs::exists(cfg.scene)) throw IoError("scene file not found: " + cfg.scene.string());
  io::SceneSpec spec = load_scene(cfg.scene);
  if (cfg.seed) {
    spec.scene.seed = *cfg.seed;
    spec.flight.seed = *cfg.seed;
  }
  write_synthetic_dataset(spec, cfg.out);
  return static_cast<std::size_t>(spec.flight.n_frames);
}

}  // namespace pushbroom
