#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <png.h>

#include "pushbroom/errors.hpp"
#include "pushbroom/geometry.hpp"
#include "pushbroom/image.hpp"
#include "pushbroom/pushbroom.hpp"

namespace pushbroom {

struct Rgb {
  std::uint8_t r, g, b;
};

/// 8-bit RGB raster for annotated frames.
class RgbImage {
 public:
  explicit RgbImage(const GrayImage& gray) : width_(gray.width()), height_(gray.height()) {
    data_.reserve(static_cast<std::size_t>(width_) * height_ * 3);
    for (std::uint8_t v : gray.pixels()) data_.insert(data_.end(), {v, v, v});
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::span<const std::uint8_t> bytes() const noexcept { return data_; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
    auto* p = data_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  Rgb get(int x, int y) const {
    const auto* p = data_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
    return {p[0], p[1], p[2]};
  }

  void outline(int x0, int y0, int size, Rgb c) {
    for (int i = 0; i < size; ++i) {
      set(x0 + i, y0, c);
      set(x0 + i, y0 + size - 1, c);
      set(x0, y0 + i, c);
      set(x0 + size - 1, y0 + i, c);
    }
  }

  void dot(double x, double y, Rgb c) {
    const int cx = static_cast<int>(std::lround(x));
    const int cy = static_cast<int>(std::lround(y));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (dx == 0 || dy == 0) set(cx + dx, cy + dy, c);
  }

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

inline constexpr Rgb kDetectionColor{40, 90, 255};
inline constexpr Rgb kMemoryColor{255, 40, 40};

/// Remembered points as red dots, current detections as blue block outlines.
inline RgbImage render_overlay(const GrayImage& left, std::span<const Detection> detections,
                               std::span<const CloudPoint> memory, const Pose& pose,
                               const StereoCalibration& calib) {
  RgbImage img(left);
  for (const auto& p : memory) {
    const auto px = reproject(calib, transform_to_camera(pose, p.world));
    if (px) img.dot(px->x, px->y, kMemoryColor);
  }
  for (const auto& d : detections) img.outline(d.x, d.y, kBlockSize, kDetectionColor);
  return img;
}

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!file) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto bytes = img.bytes();
  for (int y = 0; y < img.height(); ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * img.width() * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace pushbroom
