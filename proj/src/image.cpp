#include "v2r/image.hpp"

#include <algorithm>
#include <string>

#include "v2r/error.hpp"

namespace v2r {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 1 || height < 1) {
    throw InvalidArgument("image dimensions must be positive, got " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
  if (channels != 1 && channels != 3) {
    throw InvalidArgument("image must have 1 or 3 channels, got " +
                          std::to_string(channels));
  }
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

float Image::at_clamped(int x, int y, int c) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y, c);
}

}  // namespace v2r
