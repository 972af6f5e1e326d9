#include "v2r/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "v2r/error.hpp"

namespace v2r {
namespace {

struct Entry {
  ConfigKey key;
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

double to_double(std::string_view v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw InvalidArgument("expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

int to_int(std::string_view v) {
  int out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument("expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw InvalidArgument("expected a boolean, got '" + std::string(v) + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

#define V2R_REAL(KEY, DOC, FIELD)                                             \
  Entry {                                                                     \
    {KEY, DOC}, [](Config& c, std::string_view v) { c.FIELD = to_double(v); }, \
        [](const Config& c) { return fmt(c.FIELD); }                          \
  }
#define V2R_INT(KEY, DOC, FIELD)                                           \
  Entry {                                                                  \
    {KEY, DOC}, [](Config& c, std::string_view v) { c.FIELD = to_int(v); }, \
        [](const Config& c) { return std::to_string(c.FIELD); }            \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      V2R_REAL("detect.sigma", "Gaussian sigma applied after the median filter", detect.sigma),
      V2R_INT("detect.median_radius", "median filter radius (0 disables)", detect.median_radius),
      V2R_REAL("detect.ncc_thresh", "minimum NCC score of a marker candidate", detect.ncc_thresh),
      V2R_REAL("detect.verify_radius", "max px between NCC peak and Harris/Hough evidence", detect.verify_radius),
      V2R_INT("detect.marker_side", "marker card side in px (odd, >= 15)", detect.marker_side),
      V2R_INT("detect.mirrors", "number of mirrors in the template bank (1 or 2)", detect.mirrors),
      Entry{{"detect.single_marker", "1: each marker designates a whole mirror"},
            [](Config& c, std::string_view v) { c.detect.single_marker = to_bool(v); },
            [](const Config& c) { return std::string(c.detect.single_marker ? "1" : "0"); }},
      Entry{{"detect.pyramid", "1: propose candidates on a half-resolution frame first"},
            [](Config& c, std::string_view v) { c.detect.pyramid = to_bool(v); },
            [](const Config& c) { return std::string(c.detect.pyramid ? "1" : "0"); }},
      V2R_REAL("detect.single_width", "single-marker mirror width in px", detect.single_width),
      V2R_REAL("detect.single_height", "single-marker mirror height in px", detect.single_height),
      V2R_REAL("harris.k", "Harris trace weight k", detect.harris_k),
      V2R_REAL("harris.sigma", "Harris structure-tensor window sigma", detect.harris_sigma),
      V2R_INT("hough.r_min", "smallest circle radius voted for", detect.hough_r_min),
      V2R_INT("hough.r_max", "largest circle radius voted for", detect.hough_r_max),
      V2R_REAL("hough.vote_frac", "votes needed as a fraction of the circumference", detect.hough_vote_frac),
      V2R_REAL("smooth.alpha", "weight of the newest homography/scale sample", track.alpha),
      V2R_INT("track.hold_frames", "dropout frames a mirror survives", track.hold_frames),
      V2R_REAL("scale.margin", "quad shrink fraction the subject must fit inside", margin),
      V2R_REAL("scale.s_min", "smallest subject scale", scale.s_min),
      V2R_REAL("scale.s_max", "largest subject scale", scale.s_max),
      V2R_REAL("subject.thresh", "gray difference marking foreground", subject_thresh),
      V2R_INT("subject.min_area", "smallest subject component in px^2", subject_min_area),
      Entry{{"subject.background", "PPM background for subject detection (default: first feed frame)"},
            [](Config& c, std::string_view v) { c.background_path = std::string(v); },
            [](const Config& c) { return c.background_path; }},
      Entry{{"compose.surface_kind", "mirror (left-right flip) or window"},
            [](Config& c, std::string_view v) {
              if (v == "mirror") {
                c.surface = SurfaceKind::Mirror;
              } else if (v == "window") {
                c.surface = SurfaceKind::Window;
              } else {
                throw InvalidArgument("surface_kind must be mirror or window");
              }
            },
            [](const Config& c) {
              return std::string(c.surface == SurfaceKind::Mirror ? "mirror" : "window");
            }},
      V2R_REAL("compose.feather_px", "mask feather width in px (0: hard edge)", feather_px),
      Entry{{"compose.rectify", "homography file rectifying the feed (default: identity)"},
            [](Config& c, std::string_view v) { c.rectify_path = std::string(v); },
            [](const Config& c) { return c.rectify_path; }},
      V2R_REAL("crop.fov_deg", "feed field angle in degrees", fov_deg),
      V2R_REAL("crop.focal_px", "feed focal length in px", focal_px),
  };
  return table;
}

#undef V2R_REAL
#undef V2R_INT

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void Config::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(what);
  };
  require(detect.sigma >= 0.0, "detect.sigma must be >= 0");
  require(detect.median_radius >= 0, "detect.median_radius must be >= 0");
  require(detect.ncc_thresh <= 1.5, "detect.ncc_thresh must be <= 1.5");
  require(detect.verify_radius > 0.0, "detect.verify_radius must be > 0");
  require(detect.marker_side >= 15 && detect.marker_side % 2 == 1,
          "detect.marker_side must be odd and >= 15");
  require(detect.mirrors >= 1 && 4 * detect.mirrors <= kMaxMarkerClasses,
          "detect.mirrors must be 1 or 2");
  require(detect.single_width > 0.0 && detect.single_height > 0.0,
          "single-marker size must be positive");
  require(detect.harris_k > 0.0 && detect.harris_k < 0.25, "harris.k must lie in (0, 0.25)");
  require(detect.harris_sigma > 0.0, "harris.sigma must be > 0");
  require(detect.hough_r_min >= 2 && detect.hough_r_max >= detect.hough_r_min,
          "hough radii must satisfy 2 <= r_min <= r_max");
  require(detect.hough_vote_frac > 0.0, "hough.vote_frac must be > 0");
  require(track.alpha > 0.0 && track.alpha <= 1.0, "smooth.alpha must lie in (0, 1]");
  require(track.hold_frames >= 0, "track.hold_frames must be >= 0");
  require(margin >= 0.0 && margin < 0.5, "scale.margin must lie in [0, 0.5)");
  require(scale.s_min > 0.0 && scale.s_max >= scale.s_min,
          "scale bounds must satisfy 0 < s_min <= s_max");
  require(subject_thresh > 0.0, "subject.thresh must be > 0");
  require(subject_min_area >= 0, "subject.min_area must be >= 0");
  require(feather_px >= 0.0, "compose.feather_px must be >= 0");
  require(fov_deg > 0.0 && fov_deg < 180.0, "crop.fov_deg must lie in (0, 180)");
  require(focal_px > 0.0, "crop.focal_px must be > 0");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

std::string config_value(const Config& cfg, std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key.key == key) return e.get(cfg);
  }
  throw InvalidArgument("unknown config key '" + std::string(key) + "'");
}

Config parse_config(std::string_view text) {
  Config cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("expected 'key = value', got '" + std::string(line) + "'", line_no, "line");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& table = entries();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Entry& e) { return e.key.key == key; });
    if (it == table.end()) {
      throw ParseError("unknown config key '" + std::string(key) + "'", line_no, "line");
    }
    try {
      it->set(cfg, value);
    } catch (const InvalidArgument& e) {
      throw ParseError(std::string(key) + ": " + e.what(), line_no, "line");
    }
  }
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), line_no, "line");
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const Config& cfg) {
  std::string out;
  for (const auto& e : entries()) {
    out += std::string(e.key.key) + " = " + e.get(cfg) + "\n";
  }
  return out;
}

}  // namespace v2r
