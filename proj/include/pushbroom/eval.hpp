#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <algorithm>
#include <vector>

#include "pushbroom/geometry.hpp"

namespace pushbroom {

/// Nearest-neighbour distances binned at 0.5 / 1.0 / 2.0 / 5.0 m plus an
/// open-ended bin and a no-match bin. Bins are closed on the right, so a
/// distance of exactly 0.5 m counts as "within 0.5 m".
struct DistanceHistogram {
  static constexpr std::array<double, 4> kEdges{0.5, 1.0, 2.0, 5.0};
  static constexpr std::size_t kBins = kEdges.size() + 2;
  static constexpr std::size_t kNoMatchBin = kBins - 1;

  std::array<std::uint64_t, kBins> counts{};

  static std::array<std::string, kBins> labels() {
    return {"0-0.5", "0.5-1.0", "1.0-2.0", "2.0-5.0", ">5.0", "no-match"};
  }

  void add(double distance) {
    std::size_t bin = kEdges.size();
    for (std::size_t i = 0; i < kEdges.size(); ++i)
      if (distance <= kEdges[i]) {
        bin = i;
        break;
      }
    ++counts[bin];
  }
  void add_no_match(std::uint64_t n = 1) { counts[kNoMatchBin] += n; }

  void merge(const DistanceHistogram& other) {
    for (std::size_t i = 0; i < kBins; ++i) counts[i] += other.counts[i];
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  std::array<double, kBins> fractions() const {
    std::array<double, kBins> f{};
    const std::uint64_t t = total();
    if (t == 0) return f;
    for (std::size_t i = 0; i < kBins; ++i) f[i] = static_cast<double>(counts[i]) / static_cast<double>(t);
    return f;
  }

  /// Fraction of samples with a match at distance <= limit, for limit in kEdges.
  double fraction_within(double limit) const {
    const std::uint64_t t = total();
    if (t == 0) return 0.0;
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < kEdges.size() && kEdges[i] <= limit; ++i) n += counts[i];
    return static_cast<double>(n) / static_cast<double>(t);
  }
};

/// Exact nearest-neighbour lookup: a static k-d tree with median splits on the
/// widest axis. Candidate distances are computed exactly like brute_force(),
/// so both routes return bit-identical minima.
class NearestNeighborIndex {
 public:
  explicit NearestNeighborIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (!points_.empty()) build(0, points_.size());
  }

  bool empty() const noexcept { return points_.empty(); }
  std::size_t size() const noexcept { return points_.size(); }

  /// Distance to the closest indexed point; +inf when the index is empty.
  double nearest_distance(const Vec3& q) const {
    double best2 = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) search(0, q, best2);
    return std::sqrt(best2);
  }

  double brute_force(const Vec3& q) const {
    double best2 = std::numeric_limits<double>::infinity();
    for (const auto& p : points_) best2 = std::min(best2, (p - q).squaredNorm());
    return std::sqrt(best2);
  }

 private:
  static constexpr std::size_t kLeafSize = 12;

  struct Node {
    std::size_t begin, end;  // range in order_
    int axis = -1;           // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id;  // all coincident
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const std::size_t l = build(begin, mid);
    const std::size_t r = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(std::size_t id, const Vec3& q, double& best2) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) best2 = std::min(best2, (points_[order_[i]] - q).squaredNorm());
      return;
    }
    // Left holds values <= split, right values >= split.
    const double delta = q[n.axis] - n.split;
    const std::size_t near = delta < 0.0 ? n.left : n.right;
    const std::size_t far = delta < 0.0 ? n.right : n.left;
    search(near, q, best2);
    if (delta * delta <= best2) search(far, q, best2);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Bins the distance from every query point to its nearest reference point.
/// An empty reference set sends every query to the no-match bin.
inline DistanceHistogram nearest_distance_histogram(std::span<const Vec3> queries,
                                                    std::span<const Vec3> references,
                                                    std::vector<double>* raw = nullptr) {
  DistanceHistogram h;
  if (references.empty()) {
    h.add_no_match(queries.size());
    return h;
  }
  const NearestNeighborIndex index(references);
  for (const auto& q : queries) {
    const double dist = index.nearest_distance(q);
    h.add(dist);
    if (raw) raw->push_back(dist);
  }
  return h;
}

/// Distance from each detector point to the closest oracle point.
inline DistanceHistogram false_positive_metric(std::span<const Vec3> pushbroom_points,
                                               std::span<const Vec3> oracle_points,
                                               std::vector<double>* raw = nullptr) {
  return nearest_distance_histogram(pushbroom_points, oracle_points, raw);
}

/// Distance from each oracle point to the closest remembered detector point.
inline DistanceHistogram false_negative_metric(std::span<const Vec3> oracle_points,
                                               std::span<const Vec3> pushbroom_points,
                                               std::vector<double>* raw = nullptr) {
  return nearest_distance_histogram(oracle_points, pushbroom_points, raw);
}

/// Viewing frustum used to draw random comparison points.
struct FrustumBounds {
  StereoCalibration calib;
  int width = 376;
  int height = 240;
  double near = 1.0;
  double far = 10.0;
};

/// splitmix64; stable across platforms and standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Points drawn uniformly by volume inside each frame's frustum, with
/// counts_per_frame[i] points placed through poses[i].
inline std::vector<Vec3> random_baseline(std::span<const std::size_t> counts_per_frame,
                                         std::span<const Pose> poses, const FrustumBounds& bounds,
                                         std::uint64_t seed) {
  if (counts_per_frame.size() != poses.size())
    throw InvalidInput("random_baseline needs one pose per frame count");
  if (!(bounds.near > 0.0) || !(bounds.far > bounds.near) || bounds.width <= 0 || bounds.height <= 0)
    throw InvalidInput("random_baseline bounds must be positive with near < far");
  SplitMix64 rng(seed);
  const double n3 = bounds.near * bounds.near * bounds.near;
  const double f3 = bounds.far * bounds.far * bounds.far;
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    for (std::size_t k = 0; k < counts_per_frame[i]; ++k) {
      const double u = rng.uniform() * bounds.width - 0.5;
      const double v = rng.uniform() * bounds.height - 0.5;
      const double z = std::cbrt(n3 + rng.uniform() * (f3 - n3));
      const Vec3 pc{(u - bounds.calib.cx) * z / bounds.calib.fx, (v - bounds.calib.cy) * z / bounds.calib.fy, z};
      out.push_back(transform_to_world(poses[i], pc));
    }
  }
  return out;
}

}  // namespace pushbroom
