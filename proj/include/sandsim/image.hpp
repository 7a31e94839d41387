#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace sandsim {

using Rgb = Eigen::Vector3d;

/// Row-major, interleaved RGB image of linear-light doubles.
class Image {
 public:
  Image() = default;
  Image(int width, int height, const Rgb& fill = Rgb::Zero());

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return pixel_count() == 0; }

  double& at(int x, int y, int c) { return data_[index(x, y) + c]; }
  double at(int x, int y, int c) const { return data_[index(x, y) + c]; }
  Rgb pixel(int x, int y) const {
    const std::size_t i = index(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set_pixel(int x, int y, const Rgb& v) {
    const std::size_t i = index(x, y);
    data_[i] = v[0];
    data_[i + 1] = v[1];
    data_[i + 2] = v[2];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Rec. 601 luma per pixel, row-major.
  std::vector<double> luma() const;

  /// Mean over every pixel and channel.
  double mean() const;

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

 private:
  std::size_t index(int x, int y) const {
    return 3 * (static_cast<std::size_t>(y) * width_ + x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Single-channel boolean raster used for region masks.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  bool contains(double x, double y) const;
  std::size_t area() const;
};

// Transfer curve used for every 8-bit conversion.
inline constexpr double kDisplayGamma = 2.2;

double srgb8_to_linear(std::uint8_t v);
std::uint8_t linear_to_srgb8(double v);

/// Encodes a linear image as an 8-bit RGB PNG held in memory.
std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

/// Any nonzero sample (luma or alpha-less gray) marks the pixel as inside.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

/// 8-bit RGBA buffer (alpha = 255) after gamma encoding.
std::vector<std::uint8_t> to_rgba8(const Image& img);

/// Writes an H x W x 3 float32 array in NumPy .npy format.
void write_npy(const std::filesystem::path& path, const Image& img);
Image read_npy(const std::filesystem::path& path);

}  // namespace sandsim
