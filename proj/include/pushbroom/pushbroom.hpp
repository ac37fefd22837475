#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pushbroom/errors.hpp"
#include "pushbroom/geometry.hpp"
#include "pushbroom/image.hpp"
#include "pushbroom/worker_pool.hpp"

namespace pushbroom {

/// Single-disparity matcher settings. Thresholds are tuning parameters for
/// the aperture-3 edge scale, not measured constants.
struct PushbroomConfig {
  /// Working disparity in pixels; with the default rig this is 4.8 m.
  int disparity = 20;
  /// Minimum left-block edge energy.
  std::uint32_t edge_threshold = 5000;
  /// Maximum accepted SAD / (left + right edge energy).
  double score_threshold = 0.02;
  bool invariance_filter = true;
  std::vector<int> invariance_offsets{-5, -4, -3, 3, 4, 5};
  /// Defaults to score_threshold when unset.
  std::optional<double> invariance_score_threshold;
  int scan_stride = 1;

  double effective_invariance_threshold() const {
    return invariance_score_threshold.value_or(score_threshold);
  }

  void validate() const {
    if (disparity < 1) throw InvalidInput("disparity must be >= 1");
    if (scan_stride < 1) throw InvalidInput("scan_stride must be >= 1");
    if (!(score_threshold >= 0.0)) throw InvalidInput("score_threshold must be >= 0");
    if (!(effective_invariance_threshold() >= 0.0))
      throw InvalidInput("invariance_score_threshold must be >= 0");
    for (int o : invariance_offsets)
      if (o > -2 && o < 2)
        throw InvalidInput("invariance offsets must satisfy |offset| >= 2, got " + std::to_string(o));
  }
};

struct Detection {
  int x = 0;  ///< block top-left, left image
  int y = 0;
  double score = 0.0;
  std::uint32_t edge_sum = 0;
  Vec3 point_camera = Vec3::Zero();
};

/// SAD of the block pair divided by the summed edge energy of both blocks.
inline double score_block(const GrayImage& left, const GrayImage& right, const EdgeMap& edges_left,
                          const EdgeMap& edges_right, int x, int y, int disparity) {
  const std::uint32_t sad = block_sad(left, right, x, y, disparity);
  const std::uint32_t energy =
      block_edge_sum(edges_left, x, y) + block_edge_sum(edges_right, x - disparity, y);
  if (energy == 0) throw DegenerateBlock("both blocks carry zero edge energy");
  return static_cast<double>(sad) / static_cast<double>(energy);
}

/// True when the left block also matches the right image at some offset
/// disparity, i.e. the match is ambiguous along the scanline. Offsets whose
/// shifted block leaves the image, or whose disparity would be negative, are
/// skipped.
inline bool horizontal_invariance_check(const GrayImage& left, const GrayImage& right,
                                        const EdgeMap& edges_left, const EdgeMap& edges_right,
                                        int x, int y, const PushbroomConfig& cfg) {
  const double limit = cfg.effective_invariance_threshold();
  for (int offset : cfg.invariance_offsets) {
    const int d = cfg.disparity + offset;
    if (d < 0 || !right.contains_block(x - d, y)) continue;
    const std::uint32_t energy =
        block_edge_sum(edges_left, x, y) + block_edge_sum(edges_right, x - d, y);
    if (energy == 0) continue;
    const double s =
        static_cast<double>(block_sad(left, right, x, y, d)) / static_cast<double>(energy);
    if (s <= limit) return true;
  }
  return false;
}

namespace detail {

inline std::uint32_t sad5(const GrayImage& left, const GrayImage& right, int x, int y, int xr) {
  std::uint32_t sad = 0;
  for (int dy = 0; dy < kBlockSize; ++dy) {
    const std::uint8_t* l = left.row(y + dy).data() + x;
    const std::uint8_t* r = right.row(y + dy).data() + xr;
    for (int dx = 0; dx < kBlockSize; ++dx) sad += static_cast<std::uint32_t>(std::abs(l[dx] - r[dx]));
  }
  return sad;
}

struct FrameContext {
  const GrayImage& left;
  const GrayImage& right;
  BlockSumMap energy_left;
  BlockSumMap energy_right;
};

inline void scan_rows(const FrameContext& ctx, const PushbroomConfig& cfg,
                      const StereoCalibration& calib, int y_begin, int y_end,
                      std::vector<Detection>& out) {
  const int stride = cfg.scan_stride;
  const int d = cfg.disparity;
  const int last_x = ctx.left.width() - kBlockSize;
  const int first_x = ((d + stride - 1) / stride) * stride;
  const double inv_limit = cfg.effective_invariance_threshold();

  for (int y = y_begin; y < y_end; y += stride) {
    const std::uint32_t* el_row = ctx.energy_left.row(y).data();
    const std::uint32_t* er_row = ctx.energy_right.row(y).data();
    for (int x = first_x; x <= last_x; x += stride) {
      const std::uint32_t el = el_row[x];
      if (el < cfg.edge_threshold) continue;
      const std::uint32_t energy = el + er_row[x - d];
      if (energy == 0) continue;
      const double score =
          static_cast<double>(sad5(ctx.left, ctx.right, x, y, x - d)) / static_cast<double>(energy);
      if (score > cfg.score_threshold) continue;

      if (cfg.invariance_filter) {
        bool ambiguous = false;
        for (int offset : cfg.invariance_offsets) {
          const int dd = d + offset;
          const int xr = x - dd;
          if (dd < 0 || xr < 0 || xr > last_x) continue;
          const std::uint32_t e = el + er_row[xr];
          if (e == 0) continue;
          const double s =
              static_cast<double>(sad5(ctx.left, ctx.right, x, y, xr)) / static_cast<double>(e);
          if (s <= inv_limit) {
            ambiguous = true;
            break;
          }
        }
        if (ambiguous) continue;
      }

      Detection det;
      det.x = x;
      det.y = y;
      det.score = score;
      det.edge_sum = el;
      det.point_camera = backproject(calib, x + kBlockSize / 2, y + kBlockSize / 2, d);
      out.push_back(det);
    }
  }
}

}  // namespace detail

/// Scans every stride-aligned 5x5 block of the left image, keeping blocks that
/// carry enough edge energy, score at or below the threshold at the working
/// disparity, and (optionally) are not horizontally self-similar. Results are
/// ordered by (y, x) for any worker count.
inline std::vector<Detection> process_frame(const GrayImage& left, const GrayImage& right,
                                            const PushbroomConfig& cfg,
                                            const StereoCalibration& calib,
                                            WorkerPool* pool = nullptr) {
  cfg.validate();
  calib.validate();
  require_block_ready(left);
  if (left.width() != right.width() || left.height() != right.height())
    throw InvalidInput("left and right images differ in size");

  detail::FrameContext ctx{left, right, block_sums(laplacian(left)), block_sums(laplacian(right))};
  const int stride = cfg.scan_stride;
  const int rows = (left.height() - kBlockSize) / stride + 1;
  const std::size_t workers = pool ? pool->size() : 1;
  const std::size_t bands = std::min<std::size_t>(static_cast<std::size_t>(rows), workers * 2);

  std::vector<std::vector<Detection>> partial(bands);
  auto run_band = [&](std::size_t b) {
    const int r0 = static_cast<int>(b * rows / bands);
    const int r1 = static_cast<int>((b + 1) * rows / bands);
    detail::scan_rows(ctx, cfg, calib, r0 * stride, r1 * stride, partial[b]);
  };
  if (pool && bands > 1) {
    pool->parallel_for(bands, run_band);
  } else {
    for (std::size_t b = 0; b < bands; ++b) run_band(b);
  }

  std::size_t total = 0;
  for (const auto& p : partial) total += p.size();
  std::vector<Detection> out;
  out.reserve(total);
  for (auto& p : partial) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace pushbroom
