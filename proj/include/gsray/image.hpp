#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

namespace gsray {

/// Linear RGB image, row-major, top row first.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;  // 3 * width * height

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(3) * w * h, 0.0) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  Eigen::Map<Eigen::Vector3d> at(int x, int y) { return Eigen::Map<Eigen::Vector3d>(&rgb[offset(x, y)]); }
  Eigen::Map<const Eigen::Vector3d> at(int x, int y) const {
    return Eigen::Map<const Eigen::Vector3d>(&rgb[offset(x, y)]);
  }
  double channel(int x, int y, int c) const { return rgb[offset(x, y) + c]; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t offset(int x, int y) const { return 3 * (static_cast<std::size_t>(y) * width + x); }
};

/// Peak-1 PSNR in dB; +inf for identical images.
double psnr(const Image& a, const Image& b);
double max_abs_diff(const Image& a, const Image& b);

/// 8-bit sRGB PNG (values clamped to [0,1]).
void write_png(const Image& img, const std::filesystem::path& path);
/// 32-bit linear little-endian PFM.
void write_pfm(const Image& img, const std::filesystem::path& path);
Image read_pfm(const std::filesystem::path& path);

}  // namespace gsray
