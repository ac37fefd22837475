#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "pushbroom/errors.hpp"
#include "pushbroom/geometry.hpp"
#include "pushbroom/image.hpp"
#include "pushbroom/worker_pool.hpp"

namespace pushbroom {

/// Per-block winner of an exhaustive disparity search, indexed by block
/// top-left corner.
struct DisparityMap {
  static constexpr int kNoMatch = -1;

  int width = 0;   ///< blocks per row (image width - 4)
  int height = 0;  ///< block rows (image height - 4)
  int min_disparity = 0;
  int max_disparity = 0;
  std::vector<int> disparity;
  std::vector<std::uint32_t> sad_at_best;

  int at(int bx, int by) const { return disparity[static_cast<std::size_t>(by) * width + bx]; }
  bool matched(int bx, int by) const { return at(bx, by) != kNoMatch; }
};

struct BlockMatchParams {
  int min_disparity = 10;
  int max_disparity = 96;
  std::uint32_t edge_threshold = 5000;
  double uniqueness_ratio = 0.9;
};

/// Full SAD block matching over [min_disparity, max_disparity]. Costs for each
/// disparity are built with sliding 5x5 box sums of the absolute difference
/// image. Ties resolve toward the smaller disparity; a winner is kept only if
/// its SAD is below uniqueness_ratio times the best SAD at any disparity at
/// least two pixels away.
inline DisparityMap full_block_match(const GrayImage& left, const GrayImage& right,
                                     const BlockMatchParams& params, WorkerPool* pool = nullptr) {
  require_block_ready(left);
  if (left.width() != right.width() || left.height() != right.height())
    throw InvalidInput("left and right images differ in size");
  const int w = left.width();
  if (params.min_disparity < 0 || params.min_disparity > params.max_disparity ||
      params.max_disparity >= w - kBlockSize)
    throw InvalidInput("disparity range must satisfy 0 <= min <= max < width - 5");
  if (!(params.uniqueness_ratio > 0.0)) throw InvalidInput("uniqueness_ratio must be positive");

  const BlockSumMap energy = block_sums(laplacian(left));
  DisparityMap map;
  map.width = energy.width();
  map.height = energy.height();
  map.min_disparity = params.min_disparity;
  map.max_disparity = params.max_disparity;
  map.disparity.assign(static_cast<std::size_t>(map.width) * map.height, DisparityMap::kNoMatch);
  map.sad_at_best.assign(map.disparity.size(), 0);

  const int nd = params.max_disparity - params.min_disparity + 1;
  const int bw = map.width;
  const int bh = map.height;
  const std::size_t workers = pool ? pool->size() : 1;
  const std::size_t bands = std::min<std::size_t>(static_cast<std::size_t>(bh), workers * 2);
  constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();

  auto run_band = [&](std::size_t b) {
    const int by0 = static_cast<int>(b * bh / bands);
    const int by1 = static_cast<int>((b + 1) * bh / bands);
    if (by0 >= by1) return;
    const int rows = by1 - by0;
    std::vector<std::uint32_t> cost(static_cast<std::size_t>(rows) * bw * nd, kInvalid);
    std::vector<std::uint32_t> column(static_cast<std::size_t>(w));

    for (int k = 0; k < nd; ++k) {
      const int d = params.min_disparity + k;
      if (d > w - kBlockSize) break;
      auto add_row = [&](int y, int sign) {
        const std::uint8_t* l = left.row(y).data();
        const std::uint8_t* r = right.row(y).data();
        for (int x = d; x < w; ++x) {
          const std::uint32_t diff = static_cast<std::uint32_t>(std::abs(l[x] - r[x - d]));
          column[x] = sign > 0 ? column[x] + diff : column[x] - diff;
        }
      };
      std::fill(column.begin(), column.end(), 0u);
      for (int y = by0; y < by0 + kBlockSize; ++y) add_row(y, +1);
      for (int by = by0; by < by1; ++by) {
        if (by > by0) {
          add_row(by - 1, -1);
          add_row(by + kBlockSize - 1, +1);
        }
        std::uint32_t acc = 0;
        for (int x = d; x < d + kBlockSize; ++x) acc += column[x];
        std::uint32_t* dst = cost.data() + (static_cast<std::size_t>(by - by0) * bw) * nd + k;
        dst[static_cast<std::size_t>(d) * nd] = acc;
        for (int bx = d + 1; bx < bw; ++bx) {
          acc = acc - column[bx - 1] + column[bx + kBlockSize - 1];
          dst[static_cast<std::size_t>(bx) * nd] = acc;
        }
      }
    }

    for (int by = by0; by < by1; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        if (energy(bx, by) < params.edge_threshold) continue;
        const std::uint32_t* c = cost.data() + (static_cast<std::size_t>(by - by0) * bw + bx) * nd;
        int best = -1;
        for (int k = 0; k < nd; ++k)
          if (c[k] != kInvalid && (best < 0 || c[k] < c[best])) best = k;
        if (best < 0) continue;
        std::uint32_t second = kInvalid;
        for (int k = 0; k < nd; ++k)
          if (std::abs(k - best) >= 2 && c[k] < second) second = c[k];
        if (second != kInvalid &&
            !(static_cast<double>(c[best]) < params.uniqueness_ratio * static_cast<double>(second)))
          continue;
        const std::size_t idx = static_cast<std::size_t>(by) * bw + bx;
        map.disparity[idx] = params.min_disparity + best;
        map.sad_at_best[idx] = c[best];
      }
    }
  };

  if (pool && bands > 1) {
    pool->parallel_for(bands, run_band);
  } else {
    for (std::size_t b = 0; b < bands; ++b) run_band(b);
  }
  return map;
}

/// Camera-frame points of matched blocks (block centres) accepted by `keep(bx, by, disparity)`.
template <typename Keep>
std::vector<Vec3> matched_points(const DisparityMap& map, const StereoCalibration& calib, Keep keep) {
  std::vector<Vec3> out;
  for (int by = 0; by < map.height; ++by)
    for (int bx = 0; bx < map.width; ++bx) {
      const int d = map.at(bx, by);
      if (d <= 0 || !keep(bx, by, d)) continue;
      out.push_back(backproject(calib, bx + kBlockSize / 2, by + kBlockSize / 2, d));
    }
  return out;
}

/// Camera-frame points whose depth lies within `tolerance` of `target_depth`.
inline std::vector<Vec3> depth_crop(std::vector<Vec3> points, double target_depth, double tolerance) {
  if (!(tolerance > 0.0)) throw InvalidInput("tolerance must be positive");
  std::erase_if(points, [&](const Vec3& p) { return std::abs(p.z() - target_depth) > tolerance; });
  return points;
}

inline std::vector<Vec3> depth_crop(const DisparityMap& map, const StereoCalibration& calib,
                                    double target_depth, double tolerance) {
  return depth_crop(matched_points(map, calib, [](int, int, int) { return true; }), target_depth, tolerance);
}

}  // namespace pushbroom
