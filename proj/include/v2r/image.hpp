#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace v2r {

/// Owned row-major raster with 1 (gray) or 3 (RGB) interleaved channels.
/// Intensities are stored as floats in [0,1]; 8-bit values exist only at the
/// file boundary.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  float& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  /// Clamp-to-edge read.
  float at_clamped(int x, int y, int c = 0) const;

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* row(int y) noexcept {
    return data_.data() + static_cast<std::size_t>(y) * width_ * channels_;
  }
  const float* row(int y) const noexcept {
    return data_.data() + static_cast<std::size_t>(y) * width_ * channels_;
  }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Real-valued grid with the same indexing as Image. Used for correlation and
/// corner-response maps, which may be negative or exceed 1.
class ScoreMap {
 public:
  ScoreMap() = default;
  ScoreMap(int width, int height, double fill = 0.0)
      : width_(width), height_(height),
        values_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  double& at(int x, int y) {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }
  double at(int x, int y) const {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// 1-D kernel with an odd number of taps; the center tap is taps[radius()].
struct Kernel1D {
  std::vector<double> taps;
  int radius() const noexcept { return static_cast<int>(taps.size()) / 2; }
};

/// Square 2-D kernel, row-major, odd side.
struct Kernel2D {
  int side = 0;
  std::vector<double> taps;

  int radius() const noexcept { return side / 2; }
  double at(int i, int j) const { return taps[static_cast<std::size_t>(j) * side + i]; }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }

using Pixel = std::array<float, 3>;

}  // namespace v2r
