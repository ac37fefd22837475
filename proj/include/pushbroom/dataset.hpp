#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pushbroom/errors.hpp"
#include "pushbroom/geometry.hpp"
#include "pushbroom/io.hpp"
#include "pushbroom/presets.hpp"
#include "pushbroom/synth.hpp"

// On-disk dataset layout:
//   left/000000.pgm, right/000000.pgm, ...   8-bit rectified pairs
//   calib.txt                                fx, fy, cx, cy, baseline_m, disparity_px
//   poses.csv                                t,x,y,z,qw,qx,qy,qz (optional)
//   ground_truth/000000_surface.pgm          16-bit surface ids, 0 = background (optional)
//   ground_truth/000000_disparity.pfm        float disparity, +inf off-surface (optional)
//   masks.txt                                obstacle polygons per frame (optional)

namespace pushbroom {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Scene files

/// Parses a scene description. `preset = name` is applied before any other
/// key regardless of where it appears, so explicit keys override it.
inline io::SceneSpec parse_scene(std::string_view text, std::string_view source = "scene") {
  const auto kvs = io::parse_key_values(text, source);
  io::SceneSpec spec;
  auto fail = [&](const io::KeyValue& kv, std::string_view what) {
    throw ParseError(std::string(source) + " " + io::field_error(kv, what));
  };
  // The rig must be known before a preset derives depths from it.
  for (const auto& kv : kvs) {
    try {
      if (kv.key == "fx") spec.calib.stereo.fx = io::parse_double(kv);
      else if (kv.key == "fy") spec.calib.stereo.fy = io::parse_double(kv);
      else if (kv.key == "cx") spec.calib.stereo.cx = io::parse_double(kv);
      else if (kv.key == "cy") spec.calib.stereo.cy = io::parse_double(kv);
      else if (kv.key == "baseline_m") spec.calib.stereo.baseline = io::parse_double(kv);
      else if (kv.key == "disparity_px") spec.calib.disparity = static_cast<int>(io::parse_int(kv));
    } catch (const ParseError& e) {
      throw ParseError(std::string(source) + " " + e.what());
    }
  }
  try {
    spec.calib.stereo.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(std::string(source) + ": " + e.what());
  }
  if (spec.calib.disparity < 1) throw ParseError(std::string(source) + ": disparity_px must be >= 1");
  for (const auto& kv : kvs)
    if (kv.key == "preset" && !presets::apply(kv.value, spec)) fail(kv, "unknown preset '" + kv.value + "'");

  for (const auto& kv : kvs) {
    try {
      const auto& k = kv.key;
      if (k == "fx" || k == "fy" || k == "cx" || k == "cy" || k == "baseline_m" || k == "disparity_px" ||
          k == "preset")
        continue;
      if (k == "width") spec.size.width = static_cast<int>(io::parse_int(kv));
      else if (k == "height") spec.size.height = static_cast<int>(io::parse_int(kv));
      else if (k == "fps") spec.flight.fps = io::parse_double(kv);
      else if (k == "n_frames") spec.flight.n_frames = static_cast<int>(io::parse_int(kv));
      else if (k == "velocity") spec.flight.velocity = io::parse_vec3(kv);
      else if (k == "angular_velocity") spec.flight.angular_velocity = io::parse_vec3(kv);
      else if (k == "start_position") spec.flight.start.position = io::parse_vec3(kv);
      else if (k == "seed") {
        spec.scene.seed = io::parse_u64(kv);
        spec.flight.seed = spec.scene.seed;
      }
      else if (k == "position_noise_m") spec.flight.position_noise_m = io::parse_double(kv);
      else if (k == "rotation_noise_rad") spec.flight.rotation_noise_rad = io::parse_double(kv);
      else if (k == "background") {
        const long long v = io::parse_int(kv);
        if (v < 0 || v > 255) fail(kv, "background must be in 0..255");
        spec.scene.background = static_cast<std::uint8_t>(v);
      }
      else if (k == "background_noise") spec.scene.background_noise = io::parse_double(kv);
      else if (k == "ground_truth") spec.write_ground_truth = io::parse_bool(kv);
      else if (k == "obstacle") spec.scene.obstacles.push_back(io::parse_obstacle(kv));
      else fail(kv, "unknown key");
    } catch (const ParseError& e) {
      const std::string what = e.what();
      if (what.rfind(std::string(source), 0) == 0) throw;
      throw ParseError(std::string(source) + " " + what);
    }
  }
  if (spec.size.width < kBlockSize || spec.size.height < kBlockSize)
    throw ParseError(std::string(source) + ": width and height must be >= 5");
  if (!(spec.flight.fps > 0.0)) throw ParseError(std::string(source) + ": fps must be positive");
  if (spec.flight.n_frames < 1) throw ParseError(std::string(source) + ": n_frames must be >= 1");
  return spec;
}

inline io::SceneSpec load_scene(const fs::path& path) {
  return parse_scene(io::read_text(path), path.filename().string());
}

// ---------------------------------------------------------------------------
// Writing

struct DatasetPaths {
  fs::path root;
  fs::path left(std::size_t k) const { return root / "left" / io::frame_name(k, ".pgm"); }
  fs::path right(std::size_t k) const { return root / "right" / io::frame_name(k, ".pgm"); }
  fs::path calib() const { return root / "calib.txt"; }
  fs::path poses() const { return root / "poses.csv"; }
  fs::path masks() const { return root / "masks.txt"; }
  fs::path surface(std::size_t k) const { return root / "ground_truth" / io::frame_name(k, "_surface.pgm"); }
  fs::path disparity(std::size_t k) const { return root / "ground_truth" / io::frame_name(k, "_disparity.pfm"); }
};

inline void write_ground_truth(const DatasetPaths& paths, std::size_t k, const GroundTruth& gt) {
  io::write_pgm16(paths.surface(k), gt.width, gt.height, gt.surface);
  std::vector<float> disp(gt.surface.size());
  for (std::size_t i = 0; i < disp.size(); ++i)
    disp[i] = gt.surface[i] ? static_cast<float>(gt.fx_baseline / gt.depth[i])
                            : std::numeric_limits<float>::infinity();
  io::write_pfm(paths.disparity(k), gt.width, gt.height, disp);
}

/// Renders the scripted flight of `spec` into `root` in the canonical layout.
inline void write_synthetic_dataset(const io::SceneSpec& spec, const fs::path& root) {
  const DatasetPaths paths{root};
  fs::create_directories(root / "left");
  fs::create_directories(root / "right");
  if (spec.write_ground_truth) fs::create_directories(root / "ground_truth");
  io::write_text(paths.calib(), io::calib_text(spec.calib));
  std::vector<Pose> logged;
  scripted_flight(spec.scene, spec.calib.stereo, spec.flight, spec.size,
                  [&](int k, const Pose& pose, StereoFrame&& frame) {
                    const auto idx = static_cast<std::size_t>(k);
                    io::write_pgm(paths.left(idx), frame.left);
                    io::write_pgm(paths.right(idx), frame.right);
                    if (spec.write_ground_truth) write_ground_truth(paths, idx, frame.truth);
                    logged.push_back(pose);
                  });
  io::write_text(paths.poses(), io::poses_text(logged));
}

// ---------------------------------------------------------------------------
// Reading

/// Obstacle polygons (pixel coordinates) per frame: `frame x0,y0 x1,y1 ...`.
struct PolygonMasks {
  std::vector<std::vector<std::vector<PixelCoord>>> by_frame;

  bool contains(std::size_t frame, double x, double y) const {
    if (frame >= by_frame.size()) return false;
    for (const auto& poly : by_frame[frame]) {
      bool inside = false;
      for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) inside = !inside;
      }
      if (inside) return true;
    }
    return false;
  }
};

inline PolygonMasks parse_masks(std::string_view text, std::string_view source = "masks.txt") {
  PolygonMasks masks;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    io::KeyValue kv{"polygon", line, line_no};
    const long long frame = io::parse_int(kv, tok);
    if (frame < 0) throw ParseError(std::string(source) + " " + io::field_error(kv, "negative frame index"));
    std::vector<PixelCoord> poly;
    while (ls >> tok) {
      const auto xy = io::split(tok, ',');
      if (xy.size() != 2) throw ParseError(std::string(source) + " " + io::field_error(kv, "expected x,y vertex"));
      poly.push_back({io::parse_double(kv, xy[0]), io::parse_double(kv, xy[1])});
    }
    if (poly.size() < 3) throw ParseError(std::string(source) + " " + io::field_error(kv, "polygon needs 3 vertices"));
    if (masks.by_frame.size() <= static_cast<std::size_t>(frame)) masks.by_frame.resize(static_cast<std::size_t>(frame) + 1);
    masks.by_frame[static_cast<std::size_t>(frame)].push_back(std::move(poly));
  }
  return masks;
}

/// A dataset directory validated up front: frame count, calibration, and
/// which optional files exist.
struct Dataset {
  DatasetPaths paths;
  std::size_t frame_count = 0;
  io::DatasetCalibration calib;
  std::vector<Pose> poses;
  bool has_ground_truth = false;
  std::optional<PolygonMasks> masks;

  static Dataset open(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("dataset directory not found: " + root.string());
    Dataset ds;
    ds.paths.root = root;
    if (!fs::is_directory(root / "left") || !fs::is_directory(root / "right"))
      throw IoError("dataset has no left/ and right/ directories: " + root.string());
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(root / "left"))
      if (e.path().extension() == ".pgm") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw IoError("dataset has no frames: " + root.string());
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (names[k] != io::frame_name(k, ".pgm"))
        throw IoError("frame " + std::to_string(k) + ": expected left/" + io::frame_name(k, ".pgm"));
      if (!fs::exists(ds.paths.right(k))) throw IoError("frame " + std::to_string(k) + ": missing right image");
    }
    ds.frame_count = names.size();
    if (!fs::exists(ds.paths.calib())) throw IoError("dataset has no calib.txt: " + root.string());
    ds.calib = io::parse_calib(io::read_text(ds.paths.calib()));
    if (fs::exists(ds.paths.poses())) ds.poses = io::parse_poses(io::read_text(ds.paths.poses()));
    ds.has_ground_truth = fs::exists(ds.paths.surface(0));
    if (fs::exists(ds.paths.masks())) ds.masks = parse_masks(io::read_text(ds.paths.masks()));
    return ds;
  }

  std::pair<GrayImage, GrayImage> load_pair(std::size_t k) const {
    GrayImage left, right;
    try {
      left = io::read_pgm(paths.left(k));
      right = io::read_pgm(paths.right(k));
    } catch (const Error& e) {
      throw IoError("frame " + std::to_string(k) + " unreadable: " + e.what());
    }
    if (left.width() != right.width() || left.height() != right.height())
      throw InvalidInput("frame " + std::to_string(k) + ": left and right image sizes differ");
    return {std::move(left), std::move(right)};
  }

  std::optional<Plane<std::uint16_t>> load_surface(std::size_t k) const {
    if (!fs::exists(paths.surface(k))) return std::nullopt;
    return io::read_pgm16(paths.surface(k));
  }
};

}  // namespace pushbroom
