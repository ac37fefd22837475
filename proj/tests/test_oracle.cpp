#include <gtest/gtest.h>

#include <limits>
#include <set>

#include "pushbroom/oracle.hpp"
#include "pushbroom/presets.hpp"
#include "pushbroom/pushbroom.hpp"
#include "pushbroom/synth.hpp"
#include "support.hpp"

using namespace pushbroom;

namespace {

// Exhaustive matcher written directly from the decision rule.
std::vector<int> naive_match(const GrayImage& l, const GrayImage& r, const BlockMatchParams& p) {
  const auto edges = support::naive_laplacian(l);
  const int bw = l.width() - 4, bh = l.height() - 4;
  std::vector<int> out(static_cast<std::size_t>(bw) * bh, DisparityMap::kNoMatch);
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx) {
      if (support::naive_block_sum(edges, bx, by) < static_cast<long>(p.edge_threshold)) continue;
      std::vector<long> cost;
      for (int d = p.min_disparity; d <= p.max_disparity; ++d)
        cost.push_back(bx - d >= 0 ? support::naive_sad(l, r, bx, by, d) : -1);
      int best = -1;
      for (int k = 0; k < static_cast<int>(cost.size()); ++k)
        if (cost[k] >= 0 && (best < 0 || cost[k] < cost[best])) best = k;
      if (best < 0) continue;
      long second = std::numeric_limits<long>::max();
      for (int k = 0; k < static_cast<int>(cost.size()); ++k)
        if (cost[k] >= 0 && std::abs(k - best) >= 2) second = std::min(second, cost[k]);
      if (second != std::numeric_limits<long>::max() && !(double(cost[best]) < p.uniqueness_ratio * double(second)))
        continue;
      out[static_cast<std::size_t>(by) * bw + bx] = p.min_disparity + best;
    }
  return out;
}

}  // namespace

TEST(BlockMatch, MatchesExhaustiveSearch) {
  BlockMatchParams p;
  p.min_disparity = 3;
  p.max_disparity = 30;
  p.edge_threshold = 2000;
  for (std::uint32_t seed = 1; seed <= 3; ++seed) {
    const auto left = support::random_image(90, 24, seed);
    auto right = support::right_view_at(left, 11);
    // A noisy second half keeps both the kept and the rejected branches busy.
    const auto noise = support::random_image(90, 24, seed + 50);
    for (int y = 12; y < 24; ++y)
      for (int x = 0; x < 90; ++x) right(x, y) = static_cast<std::uint8_t>((right(x, y) + noise(x, y)) / 2);
    for (std::size_t workers : {1u, 4u}) {
      WorkerPool pool(workers);
      const auto map = full_block_match(left, right, p, &pool);
      ASSERT_EQ(map.width, 86);
      ASSERT_EQ(map.height, 20);
      EXPECT_EQ(map.disparity, naive_match(left, right, p)) << "seed " << seed;
    }
  }
}

TEST(BlockMatch, RecoversUniformShift) {
  const auto left = support::random_image(160, 30, 7);
  for (int d : {10, 20, 37}) {
    const auto right = support::right_view_at(left, d);
    const auto map = full_block_match(left, right, BlockMatchParams{});
    for (int by = 0; by < map.height; ++by)
      for (int bx = 0; bx < map.width; ++bx) {
        if (bx < d) continue;
        ASSERT_EQ(map.at(bx, by), d) << bx << "," << by;
        EXPECT_EQ(map.sad_at_best[static_cast<std::size_t>(by) * map.width + bx], 0u);
      }
  }
}

TEST(BlockMatch, TiesGoToTheSmallerDisparity) {
  // Horizontal stripes are invariant along x, and a constant offset in the
  // right view makes every disparity cost the same non-zero SAD.
  GrayImage left(80, 12), right(80, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 80; ++x) {
      left(x, y) = (y % 2) ? 40 : 200;
      right(x, y) = static_cast<std::uint8_t>(left(x, y) + 5);
    }
  BlockMatchParams p;
  p.min_disparity = 10;
  p.max_disparity = 20;
  p.uniqueness_ratio = 1.5;
  const auto map = full_block_match(left, right, p);
  EXPECT_EQ(map.at(40, 2), 10);
  EXPECT_EQ(map.sad_at_best[2 * static_cast<std::size_t>(map.width) + 40], 125u);
  p.uniqueness_ratio = 0.9;
  EXPECT_FALSE(full_block_match(left, right, p).matched(40, 2));
}

TEST(BlockMatch, PeriodicTextureFailsUniqueness) {
  GrayImage left(80, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 80; ++x) left(x, y) = (x % 4 < 2) ? 30 : 220;
  const auto right = support::right_view_at(left, 14, 30);
  BlockMatchParams p;
  p.min_disparity = 10;
  p.max_disparity = 20;
  EXPECT_FALSE(full_block_match(left, right, p).matched(40, 2));
}

TEST(BlockMatch, FlatBlocksAreUnmatched) {
  const GrayImage flat(60, 20, 90);
  const auto map = full_block_match(flat, flat, BlockMatchParams{.min_disparity = 1, .max_disparity = 20});
  for (int v : map.disparity) EXPECT_EQ(v, DisparityMap::kNoMatch);
}

TEST(BlockMatch, RangeErrors) {
  const auto img = support::random_image(40, 12, 1);
  EXPECT_THROW(full_block_match(img, img, BlockMatchParams{.min_disparity = 5, .max_disparity = 4}), InvalidInput);
  EXPECT_THROW(full_block_match(img, img, BlockMatchParams{.min_disparity = -1, .max_disparity = 4}), InvalidInput);
  EXPECT_THROW(full_block_match(img, img, BlockMatchParams{.min_disparity = 1, .max_disparity = 35}), InvalidInput);
  EXPECT_THROW(full_block_match(img, support::random_image(41, 12, 1), BlockMatchParams{.min_disparity = 1, .max_disparity = 4}),
               InvalidInput);
  BlockMatchParams p{.min_disparity = 1, .max_disparity = 4};
  p.uniqueness_ratio = 0.0;
  EXPECT_THROW(full_block_match(img, img, p), InvalidInput);
}

TEST(BlockMatch, TwoPlanesPartitionByDisparity) {
  const StereoCalibration calib;
  Scene s;
  s.obstacles.push_back(presets::noise_plane(-2.0, 2.0, -1.0, 1.0, depth_for(calib, 10), 1));
  s.obstacles.push_back(presets::noise_plane(-0.5, 0.5, -0.3, 0.3, depth_for(calib, 20), 2));
  const auto f = render_pair(s, Pose{}, calib);
  // Ground truth of the right view, to skip blocks whose match is occluded there.
  Pose right_pose;
  right_pose.position.x() = calib.baseline;
  const auto rv = render_pair(s, right_pose, calib).truth;
  const auto map = full_block_match(f.left, f.right, BlockMatchParams{});
  long near = 0, far = 0;
  for (int by = 0; by < map.height; ++by)
    for (int bx = 0; bx < map.width; ++bx) {
      const auto bd = f.truth.block_disparity(bx, by);
      if (!bd || !map.matched(bx, by)) continue;
      const int rx = bx - static_cast<int>(std::lround(*bd));
      if (rx < 0) continue;
      bool visible = true;
      for (int y = by; y < by + 5; ++y)
        for (int x = rx; x < rx + 5; ++x) visible = visible && rv.surface_at(x, y) == f.truth.surface_at(bx, by);
      if (!visible) continue;
      EXPECT_LE(std::abs(map.at(bx, by) - *bd), 1.0) << bx << "," << by;
      (*bd > 15 ? near : far)++;
    }
  EXPECT_GT(near, 1000);
  EXPECT_GT(far, 3000);
}

// Whenever the oracle's best disparity is the working one and the detector's
// own score and filter accept the block, process_frame must report it.
TEST(BlockMatch, AgreesWithTheDetector) {
  io::SceneSpec spec;
  presets::clutter(spec);
  const PushbroomConfig cfg;
  // Frames where a clutter plane passes 4.8 m: k = (z0 - 4.8) * 120 / 9.
  for (int k : {23, 36, 56}) {
    const auto f = render_pair(spec.scene, flight_pose(spec.flight, k), spec.calib.stereo);
    BlockMatchParams p;
    p.edge_threshold = cfg.edge_threshold;
    const auto map = full_block_match(f.left, f.right, p);
    const auto dets = process_frame(f.left, f.right, cfg, spec.calib.stereo);
    std::set<std::pair<int, int>> found;
    for (const auto& d : dets) found.insert({d.x, d.y});
    const auto el = laplacian(f.left);
    const auto er = laplacian(f.right);
    long implied = 0;
    for (int by = 0; by < map.height; ++by)
      for (int bx = 0; bx < map.width; ++bx) {
        if (map.at(bx, by) != cfg.disparity) continue;
        if (score_block(f.left, f.right, el, er, bx, by, cfg.disparity) > cfg.score_threshold) continue;
        if (horizontal_invariance_check(f.left, f.right, el, er, bx, by, cfg)) continue;
        ++implied;
        EXPECT_TRUE(found.count({bx, by})) << "frame " << k << " block " << bx << "," << by;
      }
    EXPECT_GT(implied, 0) << "frame " << k;
  }
}

TEST(DepthCrop, EmptyAndDistantInputs) {
  EXPECT_TRUE(depth_crop(std::vector<Vec3>{}, 4.8, 0.5).empty());
  EXPECT_TRUE(depth_crop(std::vector<Vec3>{{0, 0, 5.8}, {1, 1, 5.8}}, 4.8, 0.5).empty());
}

TEST(DepthCrop, KeepsTheWorkingSlab) {
  const std::vector<Vec3> pts{{0, 0, 4.2}, {0, 0, 4.3}, {1, 2, 4.8}, {0, 0, 5.3}, {0, 0, 5.31}};
  const auto kept = depth_crop(pts, 4.8, 0.5);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].z(), 4.3);
  EXPECT_EQ(kept[2].z(), 5.3);
  EXPECT_THROW(depth_crop(pts, 4.8, 0.0), InvalidInput);
}

TEST(DepthCrop, FromDisparityMap) {
  DisparityMap map;
  map.width = 3;
  map.height = 1;
  map.disparity = {20, 19, DisparityMap::kNoMatch};
  map.sad_at_best = {0, 0, 0};
  const StereoCalibration c;
  const auto kept = depth_crop(map, c, 4.8, 0.2);  // d = 19 is 5.05 m
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0], backproject(c, 2, 2, 20));
  EXPECT_EQ(depth_crop(map, c, 4.8, 0.5).size(), 2u);
}
