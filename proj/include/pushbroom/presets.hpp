#pragma once

#include <string>
#include <string_view>

#include "pushbroom/io.hpp"
#include "pushbroom/synth.hpp"

namespace pushbroom::presets {

inline Obstacle noise_plane(double x0, double x1, double y0, double y1, double z, std::uint64_t seed,
                            double contrast = 80.0, double cell = 0.02) {
  Obstacle ob;
  ob.min = {x0, y0, z};
  ob.max = {x1, y1, z};
  ob.texture.kind = TextureKind::Noise;
  ob.texture.seed = seed;
  ob.texture.contrast = contrast;
  ob.texture.cell = cell;
  return ob;
}

/// One textured fronto-parallel plane at the working depth, centred in view.
/// Static camera, one frame.
inline void plane(io::SceneSpec& spec) {
  const double z = depth_for(spec.calib.stereo, spec.calib.disparity);
  const double half_w = 80.0 * z / spec.calib.stereo.fx;
  const double half_h = 55.0 * z / spec.calib.stereo.fy;
  spec.scene.obstacles.push_back(noise_plane(-half_w, half_w, -half_h, half_h, z, 101));
  spec.flight.velocity = Vec3::Zero();
  spec.flight.n_frames = 1;
}

inline Obstacle post(double x0, double z0, std::uint64_t seed) {
  Obstacle ob = noise_plane(x0, x0 + 0.25, -1.8, 1.8, z0, seed);
  ob.max.z() = z0 + 0.25;
  return ob;
}

inline void fly_forward(io::SceneSpec& spec) {
  spec.flight.velocity = {0.0, 0.0, 9.0};
  spec.flight.fps = 120.0;
  spec.flight.n_frames = 120;
}

/// Three posts on alternating sides of the flight line at 7, 9.5 and 12 m,
/// about 2 m of lateral clearance. 120 frames at 9 m/s carry each one
/// through the working depth.
inline void corridor(io::SceneSpec& spec) {
  auto& obs = spec.scene.obstacles;
  obs.push_back(post(-2.1, 7.0, 11));
  obs.push_back(post(2.0, 9.5, 12));
  obs.push_back(post(-2.3, 12.0, 14));
  fly_forward(spec);
}

/// Eight panels, posts and boxes packed around the flight line between
/// 6.5 m and 13 m, some passing within 0.2 m of the camera. Same flight as
/// the corridor.
inline void clutter(io::SceneSpec& spec) {
  auto& obs = spec.scene.obstacles;
  obs.push_back(noise_plane(-1.6, -0.6, -1.0, 0.6, 6.5, 11));
  obs.push_back(noise_plane(0.5, 1.5, -0.6, 1.0, 7.5, 12));
  obs.push_back(noise_plane(-0.5, 0.4, -1.2, -0.2, 9.0, 13));
  Obstacle pole = noise_plane(-0.15, 0.15, -1.5, 1.5, 10.5, 14);
  pole.max.z() = 10.8;
  obs.push_back(pole);
  obs.push_back(noise_plane(0.3, 1.3, 0.2, 1.2, 11.5, 15));
  Obstacle block = noise_plane(-1.8, -1.2, -0.5, 0.5, 11.0, 16);
  block.max.z() = 11.6;
  obs.push_back(block);
  obs.push_back(noise_plane(-0.8, 0.2, 0.3, 1.3, 12.5, 17));
  obs.push_back(noise_plane(0.8, 1.8, -1.3, -0.3, 13.0, 18));
  fly_forward(spec);
}

/// Two noise-textured posts and a crossbar at the working depth in front of
/// a vertically striped wall whose stripe period maps to 4 px. The wall sits
/// at the depth where its own disparity is 4 px less than the working one,
/// so it also matches perfectly at the working disparity.
inline void goalpost(io::SceneSpec& spec) {
  const auto& c = spec.calib.stereo;
  const double z_post = depth_for(c, spec.calib.disparity);
  const double z_wall = depth_for(c, spec.calib.disparity - 4);
  const double period = 4.0 * z_wall / c.fx;
  auto& obs = spec.scene.obstacles;
  obs.push_back(noise_plane(-0.95, -0.7, -1.1, 1.0, z_post, 21));
  obs.push_back(noise_plane(0.7, 0.95, -1.1, 1.0, z_post, 22));
  obs.push_back(noise_plane(-0.7, 0.7, -0.05, 0.2, z_post, 23));
  Obstacle wall;
  wall.min = {-3.0, -1.8, z_wall};
  wall.max = {3.0, 1.8, z_wall};
  wall.texture.kind = TextureKind::Stripes;
  wall.texture.seed = 24;
  wall.texture.contrast = 90.0;
  wall.texture.period = period;
  obs.push_back(wall);
  spec.flight.velocity = Vec3::Zero();
  spec.flight.n_frames = 1;
}

inline bool apply(std::string_view name, io::SceneSpec& spec) {
  if (name == "plane") plane(spec);
  else if (name == "corridor") corridor(spec);
  else if (name == "clutter") clutter(spec);
  else if (name == "goalpost") goalpost(spec);
  else return false;
  return true;
}

}  // namespace pushbroom::presets
