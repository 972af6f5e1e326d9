#pragma once

#include <optional>

#include "v2r/geometry.hpp"
#include "v2r/image.hpp"
#include "v2r/marker.hpp"

namespace v2r {

struct TrackParams {
  double alpha = 0.3;
  int hold_frames = 15;
};

/// Temporal state of one mirror.
struct TrackState {
  int mirror_id = 0;
  Homography smoothed_h;
  double smoothed_s = 1.0;
  MirrorQuad last_quad;
  int frames_since_seen = 0;
  bool alive = false;
  /// False until the first detection seeds the filter.
  bool seeded = false;
};

/// Entrywise exponential blend of normalized matrices, renormalized. Falls
/// back to `cur` when the blend is singular.
Homography smooth_homography(const Homography& prev, const Homography& cur, double alpha);

/// One frame of tracking. With a detection (quad and h_new present) the
/// homography and scale are blended and the quad stored; without one the
/// track holds its values and dies once frames_since_seen > hold_frames.
/// s_new may be absent even when a quad is present (scale then holds).
TrackState update_track(const TrackState& state, const std::optional<MirrorQuad>& quad,
                        const std::optional<Homography>& h_new,
                        std::optional<double> s_new, const TrackParams& params);

struct SubjectBox {
  Box box;  // continuous coordinates, pixel i spans [i-0.5, i+0.5]
  double confidence = 0.0;
};

/// Background subtraction: |gray(feed) - gray(background)| >= thresh, mask
/// median-filtered (radius 1), bounding box of the largest 4-connected
/// component if its area reaches min_area.
std::optional<SubjectBox> estimate_subject_bbox(const Image& feed, const Image& background,
                                                double thresh, int min_area);

}  // namespace v2r
