#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "pushbroom/errors.hpp"

namespace pushbroom {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

/// Rectified pinhole stereo rig. Camera frame: +X right, +Y down, +Z forward.
/// The right camera sits `baseline` meters along +X of the left one.
struct StereoCalibration {
  double fx = 300.0;
  double fy = 300.0;
  double cx = 188.0;
  double cy = 120.0;
  double baseline = 0.32;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("focal lengths must be positive");
    if (!(baseline > 0.0)) throw InvalidInput("baseline must be positive");
    if (!std::isfinite(cx) || !std::isfinite(cy)) throw InvalidInput("principal point must be finite");
  }
};

inline double depth_for(const StereoCalibration& calib, double disparity) {
  if (!(disparity > 0.0)) throw NoDepth("disparity must be positive to carry depth");
  return calib.fx * calib.baseline / disparity;
}

inline double disparity_for(const StereoCalibration& calib, double depth) {
  if (!(depth > 0.0)) throw NoDepth("depth must be positive");
  return calib.fx * calib.baseline / depth;
}

inline Vec3 backproject(const StereoCalibration& calib, double x, double y, double disparity) {
  const double z = depth_for(calib, disparity);
  return {(x - calib.cx) * z / calib.fx, (y - calib.cy) * z / calib.fy, z};
}

/// Empty when the point is on or behind the image plane.
inline std::optional<PixelCoord> reproject(const StereoCalibration& calib, const Vec3& p) {
  if (!(p.z() > 0.0)) return std::nullopt;
  return PixelCoord{calib.fx * p.x() / p.z() + calib.cx, calib.fy * p.y() / p.z() + calib.cy};
}

/// World-from-camera rigid transform of the left camera at time t.
struct Pose {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  void validate() const {
    const double n = orientation.norm();
    if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-9)
      throw InvalidPose("orientation quaternion is not unit length (norm " + std::to_string(n) + ")");
    if (!position.allFinite() || !std::isfinite(t)) throw InvalidPose("pose has non-finite values");
  }
};

inline Vec3 transform_to_world(const Pose& pose, const Vec3& p_camera) {
  pose.validate();
  return pose.orientation * p_camera + pose.position;
}

inline Vec3 transform_to_camera(const Pose& pose, const Vec3& p_world) {
  pose.validate();
  return pose.orientation.conjugate() * (p_world - pose.position);
}

/// Advances a pose by dt under constant world-frame velocity and body-frame
/// angular velocity.
inline Pose integrate_constant_velocity(const Pose& prev, const Vec3& velocity,
                                        const Vec3& angular_velocity, double dt) {
  if (dt < 0.0) throw InvalidInput("dt must be non-negative");
  Pose next = prev;
  next.t = prev.t + dt;
  next.position = prev.position + velocity * dt;
  const Vec3 rotation = angular_velocity * dt;
  const double angle = rotation.norm();
  if (angle > 0.0) {
    const Quat delta(Eigen::AngleAxisd(angle, rotation / angle));
    next.orientation = prev.orientation * delta;
  }
  next.orientation.normalize();
  return next;
}

/// Time-ordered pose samples with linear/slerp interpolation between entries.
/// Queries outside the sampled interval clamp to the nearest end.
class PoseTrack {
 public:
  PoseTrack() = default;
  explicit PoseTrack(std::vector<Pose> poses) : poses_(std::move(poses)) {
    for (const auto& p : poses_) p.validate();
    std::stable_sort(poses_.begin(), poses_.end(),
                     [](const Pose& a, const Pose& b) { return a.t < b.t; });
  }

  bool empty() const noexcept { return poses_.empty(); }
  std::size_t size() const noexcept { return poses_.size(); }
  std::span<const Pose> poses() const noexcept { return poses_; }

  Pose at(double t) const {
    if (poses_.empty()) throw InvalidInput("pose track is empty");
    if (t <= poses_.front().t) return with_time(poses_.front(), t);
    if (t >= poses_.back().t) return with_time(poses_.back(), t);
    const auto hi = std::upper_bound(poses_.begin(), poses_.end(), t,
                                     [](double v, const Pose& p) { return v < p.t; });
    const Pose& b = *hi;
    const Pose& a = *(hi - 1);
    const double span = b.t - a.t;
    if (span <= 0.0) return with_time(a, t);
    const double alpha = (t - a.t) / span;
    Pose out;
    out.t = t;
    out.position = a.position + alpha * (b.position - a.position);
    out.orientation = a.orientation.slerp(alpha, b.orientation).normalized();
    return out;
  }

 private:
  static Pose with_time(Pose p, double t) {
    p.t = t;
    return p;
  }

  std::vector<Pose> poses_;
};

struct CloudPoint {
  Vec3 world = Vec3::Zero();
  double birth = 0.0;
  std::size_t frame = 0;
};

/// Pruning rules for remembered detections.
struct SweepPolicy {
  double retention_s = 3.0;
  /// Points at least this far behind the camera plane are dropped.
  double behind_margin_m = 0.5;
};

/// World-frame memory of past single-depth detections.
class ObstacleCloud {
 public:
  std::span<const CloudPoint> points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }

  void append(const Vec3& world, double birth, std::size_t frame) {
    points_.push_back({world, birth, frame});
  }

  /// Drops points older than the retention horizon or behind the camera.
  void prune(const Pose& pose, const SweepPolicy& policy) {
    const Quat to_camera = pose.orientation.conjugate();
    std::erase_if(points_, [&](const CloudPoint& p) {
      if (pose.t - p.birth > policy.retention_s) return true;
      const double z = (to_camera * (p.world - pose.position)).z();
      return z <= -policy.behind_margin_m;
    });
  }

 private:
  std::vector<CloudPoint> points_;
};

}  // namespace pushbroom
