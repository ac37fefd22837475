#pragma once

// Slow reference implementations and fixtures shared by the test binaries.
// Nothing here calls the library's fast paths.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pushbroom/image.hpp"
#include "pushbroom/pushbroom.hpp"

namespace support {

using pushbroom::GrayImage;

inline GrayImage random_image(int w, int h, std::uint32_t seed, int lo = 0, int hi = 255) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> u(lo, hi);
  GrayImage img(w, h);
  for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(u(rng));
  return img;
}

/// Right view of a scene that sits entirely at disparity d: right(x) = left(x + d).
inline GrayImage right_view_at(const GrayImage& left, int d, std::uint8_t fill = 0) {
  GrayImage out(left.width(), left.height(), fill);
  for (int y = 0; y < left.height(); ++y)
    for (int x = 0; x + d < left.width(); ++x) out(x, y) = left(x + d, y);
  return out;
}

/// Direct 3x3 convolution with the aperture-3 kernel, absolute value, zero frame.
inline std::vector<std::vector<int>> naive_laplacian(const GrayImage& img) {
  static const int k[3][3] = {{2, 0, 2}, {0, -8, 0}, {2, 0, 2}};
  std::vector<std::vector<int>> out(img.height(), std::vector<int>(img.width(), 0));
  for (int y = 1; y < img.height() - 1; ++y)
    for (int x = 1; x < img.width() - 1; ++x) {
      int acc = 0;
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i) acc += k[j + 1][i + 1] * img(x + i, y + j);
      out[y][x] = std::abs(acc);
    }
  return out;
}

inline long naive_block_sum(const std::vector<std::vector<int>>& m, int x, int y) {
  long s = 0;
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) s += m[y + j][x + i];
  return s;
}

inline long naive_sad(const GrayImage& l, const GrayImage& r, int x, int y, int d) {
  long s = 0;
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) s += std::abs(int(l(x + i, y + j)) - int(r(x - d + i, y + j)));
  return s;
}

struct NaiveHit {
  int x, y;
  bool operator==(const NaiveHit&) const = default;
};

/// Exhaustive per-block version of the detector's decision rule.
inline std::vector<NaiveHit> naive_detect(const GrayImage& l, const GrayImage& r,
                                          const pushbroom::PushbroomConfig& cfg) {
  const auto el = naive_laplacian(l);
  const auto er = naive_laplacian(r);
  const int d = cfg.disparity;
  const double inv = cfg.invariance_score_threshold.value_or(cfg.score_threshold);
  std::vector<NaiveHit> out;
  for (int y = 0; y + 5 <= l.height(); y += cfg.scan_stride)
    for (int x = 0; x + 5 <= l.width(); x += cfg.scan_stride) {
      if (x - d < 0) continue;
      const long eL = naive_block_sum(el, x, y);
      if (eL < static_cast<long>(cfg.edge_threshold)) continue;
      const long energy = eL + naive_block_sum(er, x - d, y);
      if (energy == 0) continue;
      if (double(naive_sad(l, r, x, y, d)) / double(energy) > cfg.score_threshold) continue;
      bool ambiguous = false;
      if (cfg.invariance_filter)
        for (int o : cfg.invariance_offsets) {
          const int dd = d + o;
          if (dd < 0 || x - dd < 0 || x - dd + 5 > l.width()) continue;
          const long e = eL + naive_block_sum(er, x - dd, y);
          if (e > 0 && double(naive_sad(l, r, x, y, dd)) / double(e) <= inv) ambiguous = true;
        }
      if (!ambiguous) out.push_back({x, y});
    }
  return out;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pushbroom_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace support
