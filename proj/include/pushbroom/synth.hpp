#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pushbroom/errors.hpp"
#include "pushbroom/eval.hpp"
#include "pushbroom/geometry.hpp"
#include "pushbroom/image.hpp"

namespace pushbroom {

enum class TextureKind { Noise, Stripes };

/// Surface pattern, defined in metres on each face so it moves rigidly with
/// the obstacle. Noise is a lattice of seeded random values; stripes are
/// vertical bars repeating every `period` metres.
struct Texture {
  TextureKind kind = TextureKind::Noise;
  std::uint64_t seed = 1;
  double contrast = 80.0;  ///< half peak-to-peak luminance swing around 128
  double cell = 0.02;      ///< noise lattice pitch, metres
  double period = 0.08;    ///< stripe period, metres
};

/// Axis-aligned box in world coordinates. A zero extent along Z makes a
/// fronto-parallel plane.
struct Obstacle {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  Texture texture;

  void validate() const {
    if (!(max.x() > min.x()) || !(max.y() > min.y()) || !(max.z() >= min.z()))
      throw InvalidInput("obstacle extents must be positive in x and y and non-negative in z");
    if (!(texture.cell > 0.0) || !(texture.period > 0.0))
      throw InvalidInput("texture pitch must be positive");
  }
};

struct Scene {
  std::vector<Obstacle> obstacles;
  std::uint8_t background = 128;
  /// Half-amplitude of per-pixel background noise; 0 gives a flat background.
  double background_noise = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    for (const auto& o : obstacles) o.validate();
  }

  /// Euclidean distance from a world point to the closest obstacle surface.
  double distance_to_surface(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : obstacles) {
      const Vec3 clamped = p.cwiseMax(o.min).cwiseMin(o.max);
      double d = (p - clamped).norm();
      if (d == 0.0) {
        // Inside (or on) the box: distance to the nearest face.
        d = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
          if (o.max[a] > o.min[a]) d = std::min({d, p[a] - o.min[a], o.max[a] - p[a]});
          else d = 0.0;
        }
      }
      best = std::min(best, d);
    }
    return best;
  }
};

struct ImageSize {
  int width = 376;
  int height = 240;
};

/// Exact per-pixel ground truth for the left view.
struct GroundTruth {
  int width = 0;
  int height = 0;
  /// 0 = background, otherwise obstacle_index * 6 + face + 1.
  std::vector<std::uint16_t> surface;
  /// Camera-frame depth of the visible surface; 0 on background.
  std::vector<double> depth;
  double fx_baseline = 0.0;

  std::uint16_t surface_at(int x, int y) const { return surface[static_cast<std::size_t>(y) * width + x]; }
  double depth_at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }

  std::optional<double> pixel_disparity(int x, int y) const {
    if (surface_at(x, y) == 0) return std::nullopt;
    return fx_baseline / depth_at(x, y);
  }

  /// Disparity of a block wholly covered by one surface, taken at its centre pixel.
  std::optional<double> block_disparity(int bx, int by) const {
    const std::uint16_t id = surface_at(bx, by);
    if (id == 0) return std::nullopt;
    for (int y = by; y < by + kBlockSize; ++y)
      for (int x = bx; x < bx + kBlockSize; ++x)
        if (surface_at(x, y) != id) return std::nullopt;
    return pixel_disparity(bx + kBlockSize / 2, by + kBlockSize / 2);
  }

  /// True when any pixel of the block, grown by `margin`, shows an obstacle.
  bool block_touches_surface(int bx, int by, int margin = 1) const {
    for (int y = std::max(0, by - margin); y < std::min(height, by + kBlockSize + margin); ++y)
      for (int x = std::max(0, bx - margin); x < std::min(width, bx + kBlockSize + margin); ++x)
        if (surface_at(x, y) != 0) return true;
    return false;
  }
};

struct StereoFrame {
  GrayImage left;
  GrayImage right;
  GroundTruth truth;
};

namespace detail {

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double hash_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

inline std::uint8_t to_luminance(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

/// Texture value at face coordinates (a, b) measured from the face's min corner.
inline std::uint8_t sample_texture(const Texture& tex, int face, double a, double b) {
  // Sub-cell phase from the seed keeps lattice boundaries off "round" world
  // coordinates, where the two views could round to different cells.
  const double phase_a = 0.5 * hash_unit(hash_mix(tex.seed, 0xA11CEULL));
  const double phase_b = 0.5 * hash_unit(hash_mix(tex.seed, 0xB0BULL));
  if (tex.kind == TextureKind::Stripes) {
    const double half = 0.5 * tex.period;
    const auto k = static_cast<std::int64_t>(std::floor(a / half + phase_a));
    return to_luminance(128.0 + ((k & 1) ? tex.contrast : -tex.contrast));
  }
  const auto i = static_cast<std::int64_t>(std::floor(a / tex.cell + phase_a));
  const auto j = static_cast<std::int64_t>(std::floor(b / tex.cell + phase_b));
  const std::uint64_t h = hash_mix(hash_mix(hash_mix(tex.seed, static_cast<std::uint64_t>(face)),
                                            static_cast<std::uint64_t>(i)),
                                   static_cast<std::uint64_t>(j));
  return to_luminance(128.0 + tex.contrast * (2.0 * hash_unit(h) - 1.0));
}

struct RayHit {
  double t;
  int face;  // axis * 2 + (0: entered through min side, 1: max side)
};

inline std::optional<RayHit> intersect(const Obstacle& box, const Vec3& origin, const Vec3& dir) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  int face = -1;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) return std::nullopt;
      continue;
    }
    double t0 = (box.min[a] - origin[a]) / dir[a];
    double t1 = (box.max[a] - origin[a]) / dir[a];
    int side = 0;
    if (t0 > t1) {
      std::swap(t0, t1);
      side = 1;
    }
    if (t0 > t_enter) {
      t_enter = t0;
      face = a * 2 + side;
    }
    t_exit = std::min(t_exit, t1);
  }
  if (face < 0 || t_enter > t_exit || !(t_enter > 0.0)) return std::nullopt;
  return RayHit{t_enter, face};
}

inline std::uint8_t shade(const Obstacle& box, int face, const Vec3& hit) {
  const int axis = face / 2;
  // Face coordinates: horizontal-ish axis first so stripes stay vertical on fronto faces.
  const int ua = axis == 0 ? 2 : 0;
  const int vb = axis == 1 ? 2 : 1;
  return sample_texture(box.texture, face, hit[ua] - box.min[ua], hit[vb] - box.min[vb]);
}

struct PixelRect {
  int x0, y0, x1, y1;  // inclusive
};

/// Conservative pixel footprint of a box; the whole image when any corner is
/// at or behind the camera plane. Empty when the box is entirely behind.
inline std::optional<PixelRect> footprint(const Obstacle& box, const Vec3& origin, const Quat& to_camera,
                                          const StereoCalibration& calib, ImageSize size) {
  double u0 = std::numeric_limits<double>::infinity(), v0 = u0;
  double u1 = -u0, v1 = -u0;
  int behind = 0;
  bool straddles = false;
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner{(c & 1) ? box.max.x() : box.min.x(), (c & 2) ? box.max.y() : box.min.y(),
                      (c & 4) ? box.max.z() : box.min.z()};
    const Vec3 pc = to_camera * (corner - origin);
    if (pc.z() <= 1e-6) {
      ++behind;
      straddles = true;
      continue;
    }
    const double u = calib.fx * pc.x() / pc.z() + calib.cx;
    const double v = calib.fy * pc.y() / pc.z() + calib.cy;
    u0 = std::min(u0, u);
    u1 = std::max(u1, u);
    v0 = std::min(v0, v);
    v1 = std::max(v1, v);
  }
  if (behind == 8) return std::nullopt;
  if (straddles) return PixelRect{0, 0, size.width - 1, size.height - 1};
  PixelRect r{static_cast<int>(std::floor(u0)) - 1, static_cast<int>(std::floor(v0)) - 1,
              static_cast<int>(std::ceil(u1)) + 1, static_cast<int>(std::ceil(v1)) + 1};
  r.x0 = std::max(r.x0, 0);
  r.y0 = std::max(r.y0, 0);
  r.x1 = std::min(r.x1, size.width - 1);
  r.y1 = std::min(r.y1, size.height - 1);
  if (r.x0 > r.x1 || r.y0 > r.y1) return std::nullopt;
  return r;
}

struct ViewBuffers {
  GrayImage image;
  std::vector<double> depth;
  std::vector<std::uint16_t> surface;
};

inline ViewBuffers render_view(const Scene& scene, const Vec3& origin, const Quat& orientation,
                               const StereoCalibration& calib, ImageSize size) {
  const std::size_t n = static_cast<std::size_t>(size.width) * size.height;
  ViewBuffers view{GrayImage(size.width, size.height, scene.background),
                   std::vector<double>(n, std::numeric_limits<double>::infinity()),
                   std::vector<std::uint16_t>(n, 0)};
  if (scene.background_noise > 0.0) {
    for (int y = 0; y < size.height; ++y)
      for (int x = 0; x < size.width; ++x) {
        const std::uint64_t h = hash_mix(hash_mix(scene.seed ^ 0xBAC6ULL, static_cast<std::uint64_t>(x)),
                                         static_cast<std::uint64_t>(y));
        view.image(x, y) = to_luminance(scene.background + scene.background_noise * (2.0 * hash_unit(h) - 1.0));
      }
  }
  const Quat to_camera = orientation.conjugate();
  const Eigen::Matrix3d rot = orientation.toRotationMatrix();
  for (std::size_t oi = 0; oi < scene.obstacles.size(); ++oi) {
    const Obstacle& box = scene.obstacles[oi];
    const auto rect = footprint(box, origin, to_camera, calib, size);
    if (!rect) continue;
    for (int y = rect->y0; y <= rect->y1; ++y) {
      for (int x = rect->x0; x <= rect->x1; ++x) {
        const Vec3 ray_cam{(x - calib.cx) / calib.fx, (y - calib.cy) / calib.fy, 1.0};
        const Vec3 dir = rot * ray_cam;
        const auto hit = intersect(box, origin, dir);
        if (!hit) continue;
        const std::size_t idx = static_cast<std::size_t>(y) * size.width + x;
        // Camera-frame depth equals t because the ray has unit z in the camera frame.
        if (!(hit->t < view.depth[idx])) continue;
        view.depth[idx] = hit->t;
        view.surface[idx] = static_cast<std::uint16_t>(oi * 6 + hit->face + 1);
        view.image(x, y) = shade(box, hit->face, origin + hit->t * dir);
      }
    }
  }
  for (auto& d : view.depth)
    if (std::isinf(d)) d = 0.0;
  return view;
}

}  // namespace detail

/// Renders the rectified pair seen from `pose` (left camera) plus left-view
/// ground truth. Occlusion is resolved per view by nearest hit.
inline StereoFrame render_pair(const Scene& scene, const Pose& pose, const StereoCalibration& calib,
                               ImageSize size = {}) {
  calib.validate();
  pose.validate();
  scene.validate();
  if (size.width < kBlockSize || size.height < kBlockSize) throw InvalidInput("image size too small");
  const Vec3 right_origin = pose.position + pose.orientation * Vec3(calib.baseline, 0.0, 0.0);
  for (const auto& box : scene.obstacles) {
    for (const Vec3* o : {&pose.position, &right_origin}) {
      if ((o->array() > box.min.array()).all() && (o->array() < box.max.array()).all())
        throw InvalidPose("camera is inside an obstacle");
    }
  }
  auto left = detail::render_view(scene, pose.position, pose.orientation, calib, size);
  auto right = detail::render_view(scene, right_origin, pose.orientation, calib, size);
  GroundTruth truth{size.width, size.height, std::move(left.surface), std::move(left.depth),
                    calib.fx * calib.baseline};
  return {std::move(left.image), std::move(right.image), std::move(truth)};
}

struct FlightPlan {
  Pose start;
  Vec3 velocity{0.0, 0.0, 9.0};
  Vec3 angular_velocity = Vec3::Zero();
  double fps = 120.0;
  int n_frames = 120;
  /// Standard deviations of the noise added to logged (not rendered) poses.
  double position_noise_m = 0.0;
  double rotation_noise_rad = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(fps > 0.0)) throw InvalidInput("fps must be positive");
    if (n_frames < 1) throw InvalidInput("n_frames must be >= 1");
    start.validate();
  }
};

/// Exact pose of frame k along the constant-velocity trajectory.
inline Pose flight_pose(const FlightPlan& plan, int k) {
  return integrate_constant_velocity(plan.start, plan.velocity, plan.angular_velocity,
                                     static_cast<double>(k) / plan.fps);
}

/// Logged poses for every frame: exact unless the plan asks for noise.
inline std::vector<Pose> flight_log(const FlightPlan& plan) {
  plan.validate();
  SplitMix64 rng(plan.seed ^ 0x9053ULL);
  auto gaussian = [&] {
    const double u1 = std::max(rng.uniform(), 1e-300);
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  };
  std::vector<Pose> log;
  log.reserve(static_cast<std::size_t>(plan.n_frames));
  for (int k = 0; k < plan.n_frames; ++k) {
    Pose p = flight_pose(plan, k);
    if (plan.position_noise_m > 0.0)
      p.position += plan.position_noise_m * Vec3(gaussian(), gaussian(), gaussian());
    if (plan.rotation_noise_rad > 0.0) {
      const Vec3 r = plan.rotation_noise_rad * Vec3(gaussian(), gaussian(), gaussian());
      if (r.norm() > 0.0) p.orientation = (p.orientation * Quat(Eigen::AngleAxisd(r.norm(), r.normalized()))).normalized();
    }
    log.push_back(p);
  }
  return log;
}

/// Renders every frame of the flight and hands it to `sink(k, logged_pose, frame)`.
inline void scripted_flight(const Scene& scene, const StereoCalibration& calib, const FlightPlan& plan,
                            ImageSize size,
                            const std::function<void(int, const Pose&, StereoFrame&&)>& sink) {
  const std::vector<Pose> log = flight_log(plan);
  for (int k = 0; k < plan.n_frames; ++k) sink(k, log[k], render_pair(scene, flight_pose(plan, k), calib, size));
}

struct SyntheticDataset {
  StereoCalibration calib;
  ImageSize size;
  std::vector<StereoFrame> frames;
  std::vector<Pose> poses;
};

inline SyntheticDataset scripted_flight(const Scene& scene, const StereoCalibration& calib,
                                        const FlightPlan& plan, ImageSize size = {}) {
  SyntheticDataset ds{calib, size, {}, {}};
  ds.frames.reserve(static_cast<std::size_t>(plan.n_frames));
  scripted_flight(scene, calib, plan, size, [&](int, const Pose& p, StereoFrame&& f) {
    ds.poses.push_back(p);
    ds.frames.push_back(std::move(f));
  });
  return ds;
}

}  // namespace pushbroom
