#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "v2r/geometry.hpp"
#include "v2r/marker.hpp"
#include "v2r/temporal.hpp"

namespace v2r {

enum class SurfaceKind { Mirror, Window };

/// Every tunable of the pipeline. Parsed from flat `key = value` text; keys
/// not listed in config_keys() are rejected.
struct Config {
  DetectParams detect;
  TrackParams track;
  ScaleBounds scale;
  double margin = 0.05;
  double subject_thresh = 0.1;
  int subject_min_area = 100;
  SurfaceKind surface = SurfaceKind::Mirror;
  double feather_px = 2.0;
  double fov_deg = 60.0;
  double focal_px = 554.2563;  // 640 px wide at 60 degrees
  /// Optional homography file for feed rectification (empty: identity).
  std::string rectify_path;
  /// Optional PPM used as the subject background (empty: first feed frame).
  std::string background_path;

  /// Range checks; throws InvalidArgument.
  void validate() const;
};

struct ConfigKey {
  std::string_view key;
  std::string_view doc;
};

/// Accepted keys in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Value of `key` in `cfg`, formatted as parse_config would accept it.
std::string config_value(const Config& cfg, std::string_view key);

/// Parses `key = value` lines; '#' starts a comment. Unknown keys and bad
/// values raise ParseError carrying the 1-based line number as offset.
Config parse_config(std::string_view text);

Config load_config(const std::string& path);

/// All keys with their current values, one `key = value` per line.
std::string format_config(const Config& cfg);

}  // namespace v2r
