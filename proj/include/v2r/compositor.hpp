#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "v2r/config.hpp"
#include "v2r/geometry.hpp"
#include "v2r/image.hpp"
#include "v2r/marker.hpp"
#include "v2r/temporal.hpp"

namespace v2r {

/// A partial image positioned at (x0, y0) in some larger frame. `mask` is
/// 1-channel coverage in [0,1] with the same dimensions as `image`.
struct Layer {
  Image image;
  Image mask;
  int x0 = 0;
  int y0 = 0;
};

/// Inverse-mapping warp of the whole feed by h_rect (bilinear); samples that
/// fall outside the feed are transparent.
Layer rectify_feed(const Image& feed, const Homography& h_rect);

/// Renders the feed into `quad`:
///   H = quad_to_quad(feed rect -> quad) o [flip] o Z(anchor, s)
/// over the quad's bounding box (clipped to out_w x out_h). The mask is the
/// quad polygon with a one-pixel inner ramp, times feed coverage. `feed_mask`, when given,
/// carries transparency from an earlier warp.
Layer warp_into_quad(const Image& feed, const MirrorQuad& quad, double s, Point2 anchor,
                     bool flip, int out_w, int out_h, const Image* feed_mask = nullptr);

/// Same, for an explicit feed->scene homography.
Layer warp_by(const Image& feed, const Homography& h, std::span<const Point2> polygon,
              int out_w, int out_h, const Image* feed_mask = nullptr);

/// Horizontal flip of feed coordinates: x -> (width - 1) - x.
Homography mirror_flip(int feed_width);

/// out = (1 - m') scene + m' layer, where m' is the layer mask eroded and
/// blurred by feather_px (used raw when feather_px is 0).
Image blend(const Image& scene, const Layer& layer, double feather_px);
void blend_into(Image& scene, const Layer& layer, double feather_px);

struct ComposeConfig {
  Config settings;
  std::optional<Homography> rectify;
  /// Subject background; when absent the first feed frame seen is used.
  std::optional<Image> background;
};

struct TrackReport {
  int mirror_id = 0;
  bool alive = false;
  bool detected = false;
  double s = 1.0;
  bool out_of_sight = false;
  Homography h;  // smoothed feed -> quad homography
  std::string error;
};

struct FrameStats {
  int frame = 0;
  int tracks = 0;  // alive after this frame
  int detections = 0;
  int failed_tracks = 0;
  double s = 0.0;  // first alive track, 0 when none
  double detect_ms = 0.0;
  double warp_ms = 0.0;
  double total_ms = 0.0;
  std::vector<TrackReport> reports;
};

/// `frame=<k> tracks=<n> s=<value> detect_ms=<v> warp_ms=<v> total_ms=<v>`
std::string format_stats(const FrameStats& stats);

/// Output of the (pure) detection stage for one scene frame.
struct Detections {
  std::vector<MarkerHit> hits;
  std::vector<MirrorQuad> quads;
  /// Mirror ids whose corner set was present but degenerate.
  std::map<int, std::string> rejected;
  double detect_ms = 0.0;
};

struct FrameResult {
  Image image;
  FrameStats stats;
};

/// Runs the per-frame procedure and owns the per-mirror track states.
class Compositor {
 public:
  explicit Compositor(ComposeConfig cfg);

  /// Marker detection and quad assembly. Pure; may run ahead on a later
  /// frame while apply() works on an earlier one.
  Detections detect(const Image& scene) const;

  /// Tracking, feed preparation, scaling, warping and blending for one
  /// frame. Frames must arrive in order.
  FrameResult apply(const Image& scene, const Image& feed, const Detections& det);

  FrameResult compose_frame(const Image& scene, const Image& feed) {
    return apply(scene, feed, detect(scene));
  }

  const std::map<int, TrackState>& tracks() const { return tracks_; }
  const ComposeConfig& config() const { return cfg_; }
  int frames_processed() const { return frame_index_; }

 private:
  ComposeConfig cfg_;
  std::unique_ptr<MarkerDetector> detector_;
  std::map<int, TrackState> tracks_;
  std::map<int, Point2> anchors_;
  std::optional<Image> prepared_background_;
  int frame_index_ = 0;
};

}  // namespace v2r
