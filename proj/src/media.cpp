#include "v2r/media.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "v2r/error.hpp"

namespace fs = std::filesystem;

namespace v2r {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  int number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long long v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) throw ParseError(std::string(what) + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("expected ") + what, start);
    return static_cast<int>(v);
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }
  char peek() const { return pos_ < bytes_.size() ? bytes_[pos_] : '\0'; }
  bool at_end() const { return pos_ >= bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string number_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::uint8_t to_byte(float v) {
  const double r = std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(r);
}

float from_byte(std::uint8_t b) { return static_cast<float>(b / 255.0); }

Image decode_ppm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw ParseError("not a binary PPM/PGM (expected magic P6 or P5)", 0);
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader r(bytes);
  r.advance(2);
  if (!is_space(r.peek())) throw ParseError("expected whitespace after magic", r.pos());
  const int w = r.number("width");
  const int h = r.number("height");
  const std::size_t maxval_pos = r.pos();
  const int maxval = r.number("maxval");
  if (maxval != 255) throw ParseError("only maxval 255 is supported", maxval_pos);
  if (w < 1 || h < 1) throw ParseError("image dimensions must be positive", maxval_pos);
  if (!is_space(r.peek())) throw ParseError("expected whitespace after maxval", r.pos());
  r.advance(1);
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - r.pos() < need) {
    throw ParseError("pixel data is short: need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - r.pos()),
                     bytes.size());
  }
  Image img(w, h, channels);
  auto dst = img.data();
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + r.pos());
  for (std::size_t i = 0; i < need; ++i) dst[i] = from_byte(src[i]);
  return img;
}

std::string encode_ppm(const Image& img) {
  const char magic = img.channels() == 3 ? '6' : '5';
  std::string out = "P";
  out += magic;
  out += '\n';
  out += std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  const auto src = img.data();
  const std::size_t header = out.size();
  out.resize(header + src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[header + i] = static_cast<char>(to_byte(src[i]));
  }
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Image read_ppm(const fs::path& path) {
  const std::string bytes = read_text_file(path);
  try {
    return decode_ppm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_ppm(const Image& img, const fs::path& path) {
  write_text_file(path, encode_ppm(img));
}

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.ppm", index);
  return buf;
}

SequenceReader::SequenceReader(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::is_directory(dir_)) throw IoError("not a directory: " + dir_.string());
  std::vector<int> indices;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const std::string name = entry.path().filename().string();
    if (name.size() != 16 || name.rfind("frame_", 0) != 0 ||
        name.substr(12) != ".ppm") {
      continue;
    }
    const std::string digits = name.substr(6, 6);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      continue;
    }
    indices.push_back(std::stoi(digits));
  }
  std::sort(indices.begin(), indices.end());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] != static_cast<int>(i)) {
      throw IoError("missing frame " + std::to_string(i) + " in " + dir_.string());
    }
  }
  if (indices.empty()) throw IoError("no frames in " + dir_.string());
  count_ = indices.size();
  const Image first = read_ppm(dir_ / frame_name(0));
  width_ = first.width();
  height_ = first.height();
  channels_ = first.channels();
}

Image SequenceReader::frame(int index) const {
  if (index < 0 || index >= size()) {
    throw InvalidArgument("frame index " + std::to_string(index) + " out of range");
  }
  Image img = read_ppm(dir_ / frame_name(index));
  if (img.width() != width_ || img.height() != height_ || img.channels() != channels_) {
    throw IoError("frame " + std::to_string(index) + " differs in shape from frame 0");
  }
  return img;
}

FrameSequence read_sequence(const fs::path& dir) {
  const SequenceReader reader(dir);
  FrameSequence seq;
  for (int i = 0; i < reader.size(); ++i) {
    seq.frames.push_back(read_ppm(dir / frame_name(i)));
    if (!seq.frames.back().same_shape(seq.frames.front())) {
      throw IoError("frame " + std::to_string(i) + " differs in shape from frame 0");
    }
  }
  return seq;
}

void write_sequence(const FrameSequence& seq, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    write_ppm(seq.frames[i], dir / frame_name(static_cast<int>(i)));
  }
}

std::string format_manifest(const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += std::to_string(r.frame) + " " + std::to_string(r.mirror_id);
    for (const auto& p : r.quad) out += " " + number_text(p.x) + " " + number_text(p.y);
    for (double e : r.h.row_major()) out += " " + number_text(e);
    for (double v : {r.subject.x0, r.subject.y0, r.subject.x1, r.subject.y1}) {
      out += " " + number_text(v);
    }
    out += "\n";
  }
  return out;
}

std::vector<ManifestRecord> parse_manifest(std::string_view text) {
  std::vector<ManifestRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    ManifestRecord r;
    std::array<double, 9> h{};
    bool ok = static_cast<bool>(ls >> r.frame >> r.mirror_id);
    for (auto& p : r.quad) ok = ok && static_cast<bool>(ls >> p.x >> p.y);
    for (auto& e : h) ok = ok && static_cast<bool>(ls >> e);
    ok = ok && static_cast<bool>(ls >> r.subject.x0 >> r.subject.y0 >> r.subject.x1 >> r.subject.y1);
    std::string extra;
    if (!ok || (ls >> extra)) {
      throw ParseError("manifest record needs 25 fields", line_no, "line");
    }
    r.h = Homography::from_row_major(h);
    out.push_back(r);
  }
  return out;
}

}  // namespace v2r
