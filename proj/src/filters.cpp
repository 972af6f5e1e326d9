#include "v2r/filters.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>
#include <vector>

#include "v2r/error.hpp"

namespace v2r {
namespace {

// Filters are convex combinations of [0,1] data; anything further out than
// rounding noise is a bug.
float store_unit(double v) {
  assert(v >= -1e-9 && v <= 1.0 + 1e-9);
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

void require_gray(const Image& img, const char* op) {
  if (img.channels() != 1) {
    throw InvalidArgument(std::string(op) + " expects a 1-channel image");
  }
}

// Clamped index table for a padded scan of length n with radius r.
std::vector<int> clamp_table(int n, int r) {
  std::vector<int> idx(static_cast<std::size_t>(n + 2 * r));
  for (int i = -r; i < n + r; ++i) idx[i + r] = std::clamp(i, 0, n - 1);
  return idx;
}

inline float med3(float a, float b, float c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

}  // namespace

Image to_grayscale(const Image& rgb) {
  if (rgb.channels() != 3) {
    throw InvalidArgument("to_grayscale expects a 3-channel image");
  }
  Image out(rgb.width(), rgb.height(), 1);
  auto src = rgb.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double v = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] +
                     0.114 * src[3 * i + 2];
    dst[i] = store_unit(v);
  }
  return out;
}

Kernel1D gaussian_kernel(double sigma) {
  if (!std::isfinite(sigma) || sigma <= 0.0) {
    throw InvalidArgument("gaussian sigma must be positive and finite");
  }
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  Kernel1D k;
  k.taps.resize(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k.taps[i + radius] = w;
    total += w;
  }
  for (double& t : k.taps) t /= total;
  return k;
}

Image gaussian_filter(const Image& img, double sigma) {
  const Kernel1D k = gaussian_kernel(sigma);
  const int r = k.radius();
  const int w = img.width();
  const int h = img.height();
  const int ch = img.channels();
  const auto xs = clamp_table(w, r);
  const auto ys = clamp_table(h, r);

  // Rows are padded with their edge pixels so the tap loop runs over
  // contiguous memory; each output still sums its taps in order.
  const std::size_t stride = static_cast<std::size_t>(w) * ch;
  std::vector<double> tmp(img.data().size());
  std::vector<double> padded(static_cast<std::size_t>(w + 2 * r) * ch);
  for (int y = 0; y < h; ++y) {
    const float* src = img.row(y);
    for (int x = 0; x < w + 2 * r; ++x) {
      for (int c = 0; c < ch; ++c) padded[static_cast<std::size_t>(x) * ch + c] = src[xs[x] * ch + c];
    }
    double* dst = tmp.data() + static_cast<std::size_t>(y) * stride;
    std::fill(dst, dst + stride, 0.0);
    for (int i = 0; i <= 2 * r; ++i) {
      const double t = k.taps[i];
      const double* p = padded.data() + static_cast<std::size_t>(i) * ch;
      for (std::size_t j = 0; j < stride; ++j) dst[j] += t * p[j];
    }
  }

  Image out(w, h, ch);
  std::vector<double> acc(stride);
  for (int y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int j = -r; j <= r; ++j) {
      const double t = k.taps[j + r];
      const double* src = tmp.data() + ys[y + j + r] * stride;
      for (std::size_t i = 0; i < stride; ++i) acc[i] += t * src[i];
    }
    float* dst = out.row(y);
    for (std::size_t i = 0; i < stride; ++i) dst[i] = store_unit(acc[i]);
  }
  return out;
}

Image median_filter(const Image& img, int radius) {
  if (radius < 1) {
    throw InvalidArgument("median radius must be at least 1");
  }
  const int w = img.width();
  const int h = img.height();
  const int ch = img.channels();
  const auto xs = clamp_table(w, radius);
  const auto ys = clamp_table(h, radius);
  Image out(w, h, ch);

  if (radius == 1) {
    // Sort each 3-tall column once; the 3x3 median is then
    // med3(max of lows, med3 of mids, min of highs). Branch-free.
    const int n = (w + 2) * ch;
    std::vector<float> lo(n), mid(n), hi(n);
    for (int y = 0; y < h; ++y) {
      const float* r0 = img.row(ys[y]);
      const float* r1 = img.row(ys[y + 1]);
      const float* r2 = img.row(ys[y + 2]);
      for (int x = 0; x < w + 2; ++x) {
        const int src = xs[x] * ch;
        for (int k = 0; k < ch; ++k) {
          const float a = r0[src + k];
          const float b = r1[src + k];
          const float c = r2[src + k];
          const int i = x * ch + k;
          lo[i] = std::min(std::min(a, b), c);
          hi[i] = std::max(std::max(a, b), c);
          mid[i] = med3(a, b, c);
        }
      }
      float* dst = out.row(y);
      for (int i = 0; i < w * ch; ++i) {
        const float l = std::max(std::max(lo[i], lo[i + ch]), lo[i + 2 * ch]);
        const float m = med3(mid[i], mid[i + ch], mid[i + 2 * ch]);
        const float u = std::min(std::min(hi[i], hi[i + ch]), hi[i + 2 * ch]);
        dst[i] = med3(l, m, u);
      }
    }
    return out;
  }

  const int side = 2 * radius + 1;
  std::vector<float> window(static_cast<std::size_t>(side) * side);
  const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        std::size_t n = 0;
        for (int j = 0; j < side; ++j) {
          const float* src = img.row(ys[y + j]);
          for (int i = 0; i < side; ++i) window[n++] = src[xs[x + i] * ch + c];
        }
        std::nth_element(window.begin(), mid, window.end());
        out.at(x, y, c) = *mid;
      }
    }
  }
  return out;
}

Image convolve2d(const Image& gray, const Kernel2D& kernel) {
  require_gray(gray, "convolve2d");
  if (kernel.side < 1 || kernel.side % 2 == 0 ||
      kernel.taps.size() != static_cast<std::size_t>(kernel.side) * kernel.side) {
    throw InvalidArgument("convolution kernel must be square with an odd side");
  }
  const int r = kernel.radius();
  const int w = gray.width();
  const int h = gray.height();
  Image out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -r; j <= r; ++j) {
        for (int i = -r; i <= r; ++i) {
          acc += kernel.at(i + r, j + r) * gray.at_clamped(x - i, y - j);
        }
      }
      // Kernels with negative taps (derivatives) leave [0,1]; saturate.
      out.at(x, y) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return out;
}

Gradients sobel_gradients(const Image& gray) {
  require_gray(gray, "sobel_gradients");
  const int w = gray.width();
  const int h = gray.height();
  Gradients g{ScoreMap(w, h), ScoreMap(w, h)};
  const auto xs = clamp_table(w, 1);
  const auto ys = clamp_table(h, 1);
  for (int y = 0; y < h; ++y) {
    const float* up = gray.row(ys[y]);
    const float* mid = gray.row(ys[y + 1]);
    const float* dn = gray.row(ys[y + 2]);
    for (int x = 0; x < w; ++x) {
      const int l = xs[x];
      const int c = xs[x + 1];
      const int r = xs[x + 2];
      const double gx = (double(up[r]) + 2.0 * mid[r] + dn[r]) -
                        (double(up[l]) + 2.0 * mid[l] + dn[l]);
      const double gy = (double(dn[l]) + 2.0 * dn[c] + dn[r]) -
                        (double(up[l]) + 2.0 * up[c] + up[r]);
      g.gx.at(x, y) = gx / 8.0;
      g.gy.at(x, y) = gy / 8.0;
    }
  }
  return g;
}

std::optional<Pixel> sample_bilinear(const Image& img, double x, double y) {
  const int w = img.width();
  const int h = img.height();
  if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) return std::nullopt;
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  Pixel out{0.0f, 0.0f, 0.0f};
  for (int c = 0; c < img.channels(); ++c) {
    const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    out[c] = static_cast<float>((1.0 - fy) * top + fy * bot);
  }
  return out;
}

IntegralImages::IntegralImages(const Image& gray)
    : width_(gray.width()), height_(gray.height()) {
  require_gray(gray, "integral_images");
  const std::size_t stride = static_cast<std::size_t>(width_) + 1;
  sum_.assign(stride * (height_ + 1), 0.0);
  sq_.assign(stride * (height_ + 1), 0.0);
  for (int y = 0; y < height_; ++y) {
    const float* src = gray.row(y);
    double row_sum = 0.0;
    double row_sq = 0.0;
    for (int x = 0; x < width_; ++x) {
      const double v = src[x];
      row_sum += v;
      row_sq += v * v;
      sum_[(y + 1) * stride + x + 1] = sum_[y * stride + x + 1] + row_sum;
      sq_[(y + 1) * stride + x + 1] = sq_[y * stride + x + 1] + row_sq;
    }
  }
}

}  // namespace v2r
