#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "pushbroom/errors.hpp"

namespace pushbroom {

/// Side length of the square matching block.
inline constexpr int kBlockSize = 5;
inline constexpr int kBlockArea = kBlockSize * kBlockSize;

/// Dense row-major single-channel raster.
template <typename Pixel>
class Plane {
 public:
  using value_type = Pixel;

  Plane() = default;
  Plane(int width, int height, Pixel fill = Pixel{})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InvalidInput("negative image dimensions");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  Plane(int width, int height, std::vector<Pixel> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 0 || height < 0 ||
        data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      throw InvalidInput("image buffer length does not match width x height");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }

  Pixel operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
  Pixel& operator()(int x, int y) noexcept { return data_[index(x, y)]; }

  Pixel at(int x, int y) const {
    if (!contains(x, y)) throw InvalidInput("pixel out of bounds");
    return data_[index(x, y)];
  }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  /// True when the kBlockSize square with top-left (x, y) lies inside the raster.
  bool contains_block(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x + kBlockSize <= width_ && y + kBlockSize <= height_;
  }

  std::span<const Pixel> row(int y) const noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }
  std::span<Pixel> row(int y) noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }

  std::span<const Pixel> pixels() const noexcept { return data_; }
  std::span<Pixel> pixels() noexcept { return data_; }

  bool operator==(const Plane&) const = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Pixel> data_;
};

/// Rectified 8-bit luminance image.
using GrayImage = Plane<std::uint8_t>;
/// Absolute Laplacian response; max magnitude is 8 * 255 = 2040.
using EdgeMap = Plane<std::uint16_t>;
/// Per-block sums indexed by block top-left corner.
using BlockSumMap = Plane<std::uint32_t>;

inline void require_block_ready(const GrayImage& img) {
  if (img.width() < kBlockSize || img.height() < kBlockSize)
    throw InvalidInput("image must be at least 5x5, got " + std::to_string(img.width()) + "x" +
                       std::to_string(img.height()));
}

/// Aperture-3 Laplacian magnitude with kernel [[2,0,2],[0,-8,0],[2,0,2]].
/// The one-pixel frame is left at zero.
inline EdgeMap laplacian(const GrayImage& img) {
  require_block_ready(img);
  const int w = img.width();
  const int h = img.height();
  EdgeMap out(w, h, 0);
  for (int y = 1; y + 1 < h; ++y) {
    const std::uint8_t* up = img.row(y - 1).data();
    const std::uint8_t* mid = img.row(y).data();
    const std::uint8_t* down = img.row(y + 1).data();
    std::uint16_t* dst = out.row(y).data();
    for (int x = 1; x + 1 < w; ++x) {
      const int corners = up[x - 1] + up[x + 1] + down[x - 1] + down[x + 1];
      const int response = 2 * corners - 8 * mid[x];
      dst[x] = static_cast<std::uint16_t>(response < 0 ? -response : response);
    }
  }
  return out;
}

template <typename Pixel>
void require_block(const Plane<Pixel>& plane, int x, int y, const char* what) {
  if (!plane.contains_block(x, y))
    throw InvalidInput(std::string(what) + " block at (" + std::to_string(x) + ", " +
                       std::to_string(y) + ") is out of bounds");
}

/// Sum of the edge map over the 5x5 block whose top-left corner is (x, y).
inline std::uint32_t block_edge_sum(const EdgeMap& edges, int x, int y) {
  require_block(edges, x, y, "edge");
  std::uint32_t sum = 0;
  for (int dy = 0; dy < kBlockSize; ++dy) {
    const std::uint16_t* r = edges.row(y + dy).data() + x;
    for (int dx = 0; dx < kBlockSize; ++dx) sum += r[dx];
  }
  return sum;
}

/// SAD between the left block at (x, y) and the right block at (x - disparity, y).
inline std::uint32_t block_sad(const GrayImage& left, const GrayImage& right, int x, int y,
                               int disparity) {
  if (disparity < 0) throw InvalidInput("disparity must be non-negative");
  require_block(left, x, y, "left");
  require_block(right, x - disparity, y, "right");
  std::uint32_t sad = 0;
  for (int dy = 0; dy < kBlockSize; ++dy) {
    const std::uint8_t* l = left.row(y + dy).data() + x;
    const std::uint8_t* r = right.row(y + dy).data() + x - disparity;
    for (int dx = 0; dx < kBlockSize; ++dx) sad += static_cast<std::uint32_t>(std::abs(l[dx] - r[dx]));
  }
  return sad;
}

/// 5x5 box sums for every block position, (w - 4) x (h - 4).
template <typename Pixel>
BlockSumMap block_sums(const Plane<Pixel>& plane) {
  if (plane.width() < kBlockSize || plane.height() < kBlockSize)
    throw InvalidInput("plane smaller than one block");
  const int w = plane.width();
  const int bw = w - kBlockSize + 1;
  const int bh = plane.height() - kBlockSize + 1;
  BlockSumMap out(bw, bh, 0);
  std::vector<std::uint32_t> column(static_cast<std::size_t>(w), 0);
  for (int y = 0; y < kBlockSize; ++y) {
    const Pixel* r = plane.row(y).data();
    for (int x = 0; x < w; ++x) column[x] += r[x];
  }
  for (int by = 0; by < bh; ++by) {
    if (by > 0) {
      const Pixel* gone = plane.row(by - 1).data();
      const Pixel* added = plane.row(by + kBlockSize - 1).data();
      for (int x = 0; x < w; ++x) column[x] = column[x] - gone[x] + added[x];
    }
    std::uint32_t* dst = out.row(by).data();
    std::uint32_t acc = 0;
    for (int x = 0; x < kBlockSize; ++x) acc += column[x];
    dst[0] = acc;
    for (int bx = 1; bx < bw; ++bx) {
      acc = acc - column[bx - 1] + column[bx + kBlockSize - 1];
      dst[bx] = acc;
    }
  }
  return out;
}

}  // namespace pushbroom
