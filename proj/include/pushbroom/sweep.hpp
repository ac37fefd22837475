#pragma once

#include <cstddef>
#include <span>

#include "pushbroom/geometry.hpp"
#include "pushbroom/pushbroom.hpp"

namespace pushbroom {

/// Moves this frame's single-depth detections into world coordinates, appends
/// them to the memory and prunes stale or passed points. Existing points are
/// never moved.
inline void sweep_update(ObstacleCloud& cloud, std::span<const Detection> detections,
                         const Pose& pose, std::size_t frame, const SweepPolicy& policy = {}) {
  pose.validate();
  for (const auto& det : detections)
    cloud.append(transform_to_world(pose, det.point_camera), pose.t, frame);
  cloud.prune(pose, policy);
}

}  // namespace pushbroom
