#pragma once

#include <optional>
#include <utility>

#include "v2r/image.hpp"

namespace v2r {

/// Luma conversion with fixed weights 0.299/0.587/0.114.
Image to_grayscale(const Image& rgb);

/// Normalized Gaussian taps of radius ceil(3*sigma).
Kernel1D gaussian_kernel(double sigma);

/// Separable Gaussian blur, horizontal pass then vertical, clamp-to-edge.
Image gaussian_filter(const Image& img, double sigma);

/// Per-channel median over the (2r+1)^2 clamp-to-edge window.
Image median_filter(const Image& img, int radius);

/// Dense convolution of a gray image, clamp-to-edge:
///   out(x,y) = sum_{i,j} k(i,j) * img(x - i, y - j)
/// with i,j measured from the kernel center.
Image convolve2d(const Image& gray, const Kernel2D& kernel);

struct Gradients {
  ScoreMap gx;
  ScoreMap gy;
};

/// 3x3 Sobel pair scaled by 1/8, so a unit ramp of slope 1 yields gradient 1.
/// gx is positive where intensity increases to the right, gy downwards.
Gradients sobel_gradients(const Image& gray);

/// Bilinear read. Returns nullopt when (x,y) lies outside [0,w-1]x[0,h-1].
std::optional<Pixel> sample_bilinear(const Image& img, double x, double y);

/// Summed-area tables with a zero first row and column.
class IntegralImages {
 public:
  IntegralImages() = default;
  explicit IntegralImages(const Image& gray);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  /// Sum over the half-open rectangle [x0,x1) x [y0,y1).
  double sum(int x0, int y0, int x1, int y1) const {
    return rect(sum_, x0, y0, x1, y1);
  }
  double sum_sq(int x0, int y0, int x1, int y1) const {
    return rect(sq_, x0, y0, x1, y1);
  }

 private:
  double rect(const std::vector<double>& t, int x0, int y0, int x1, int y1) const {
    if (x1 <= x0 || y1 <= y0) return 0.0;
    const auto stride = static_cast<std::size_t>(width_) + 1;
    return t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] +
           t[y0 * stride + x0];
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> sum_;
  std::vector<double> sq_;
};

inline IntegralImages integral_images(const Image& gray) {
  return IntegralImages(gray);
}

}  // namespace v2r
