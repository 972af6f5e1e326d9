#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "v2r/geometry.hpp"
#include "v2r/image.hpp"

namespace v2r {

/// [0,1] -> byte: round(v * 255).
std::uint8_t to_byte(float v);
/// byte -> [0,1]: b / 255.
float from_byte(std::uint8_t b);

/// Binary PPM (P6, 3 channels) or PGM (P5, 1 channel), maxval 255.
Image decode_ppm(std::string_view bytes);
std::string encode_ppm(const Image& img);

Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& img, const std::filesystem::path& path);

/// "frame_000042.ppm"
std::string frame_name(int index);

struct FrameSequence {
  std::vector<Image> frames;
  double fps = 30.0;  // nominal, not stored on disk
};

/// Lists frame files of a directory without decoding them. Throws IoError
/// naming the first missing index when the numbering has a gap.
class SequenceReader {
 public:
  explicit SequenceReader(std::filesystem::path dir);

  int size() const { return static_cast<int>(count_); }
  /// Decodes frame `index`; all frames must share the first frame's shape.
  Image frame(int index) const;
  const std::filesystem::path& dir() const { return dir_; }
  int width() const { return width_; }
  int height() const { return height_; }

 private:
  std::filesystem::path dir_;
  std::size_t count_ = 0;
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
};

FrameSequence read_sequence(const std::filesystem::path& dir);
/// Writes frames in index order, creating the directory if needed.
void write_sequence(const FrameSequence& seq, const std::filesystem::path& dir);

/// Ground truth for one (frame, mirror).
struct ManifestRecord {
  int frame = 0;
  int mirror_id = 0;
  std::array<Point2, 4> quad;  // TL, TR, BR, BL
  Homography h;                // feed rectangle -> quad
  Box subject;                 // feed subject box, zero when absent
};

/// One line per record:
///   frame mirror_id x0 y0 x1 y1 x2 y2 x3 y3 h11 .. h33 bx0 by0 bx1 by1
std::string format_manifest(const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> parse_manifest(std::string_view text);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace v2r
