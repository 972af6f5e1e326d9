#include "v2r/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/LU>

#include "v2r/error.hpp"
#include "v2r/filters.hpp"

namespace v2r {

Homography smooth_homography(const Homography& prev, const Homography& cur, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidArgument("smoothing alpha must lie in (0, 1]");
  }
  if (alpha == 1.0) return cur;
  const Mat3 blend = (1.0 - alpha) * prev.matrix() + alpha * cur.matrix();
  const Mat3 norm = normalize_homography(blend);
  if (!norm.allFinite() || std::abs(norm.determinant()) <= 1e-12) return cur;
  return Homography(norm);
}

TrackState update_track(const TrackState& state, const std::optional<MirrorQuad>& quad,
                        const std::optional<Homography>& h_new,
                        std::optional<double> s_new, const TrackParams& params) {
  if (params.hold_frames < 0) throw InvalidArgument("hold_frames must be >= 0");
  TrackState next = state;
  if (quad && h_new) {
    if (quad->mirror_id != state.mirror_id) {
      throw InvalidArgument("detection belongs to a different mirror");
    }
    if (s_new && !(*s_new > 0.0)) throw InvalidArgument("scale must be positive");
    if (!state.seeded || !state.alive) {
      // First sample (or first after a loss) seeds the filter outright.
      next.smoothed_h = *h_new;
      next.smoothed_s = s_new.value_or(state.seeded ? state.smoothed_s : 1.0);
    } else {
      next.smoothed_h = smooth_homography(state.smoothed_h, *h_new, params.alpha);
      if (s_new) {
        next.smoothed_s = (1.0 - params.alpha) * state.smoothed_s + params.alpha * *s_new;
      }
    }
    next.last_quad = *quad;
    next.frames_since_seen = 0;
    next.alive = true;
    next.seeded = true;
    return next;
  }
  if (!state.alive) return next;
  next.frames_since_seen = state.frames_since_seen + 1;
  if (next.frames_since_seen > params.hold_frames) next.alive = false;
  return next;
}

std::optional<SubjectBox> estimate_subject_bbox(const Image& feed, const Image& background,
                                                double thresh, int min_area) {
  if (feed.width() != background.width() || feed.height() != background.height()) {
    throw InvalidArgument("feed and background dimensions differ");
  }
  const Image a = feed.channels() == 1 ? feed : to_grayscale(feed);
  const Image b = background.channels() == 1 ? background : to_grayscale(background);
  const int w = a.width();
  const int h = a.height();

  Image mask(w, h, 1);
  {
    const auto da = a.data();
    const auto db = b.data();
    auto dm = mask.data();
    for (std::size_t i = 0; i < dm.size(); ++i) {
      dm[i] = std::abs(double(da[i]) - double(db[i])) >= thresh ? 1.0f : 0.0f;
    }
  }
  mask = median_filter(mask, 1);

  // Largest 4-connected foreground component; ties keep the first found in
  // raster order.
  std::vector<int> label(static_cast<std::size_t>(w) * h, 0);
  std::vector<int> stack;
  int best_area = 0;
  int bx0 = 0, by0 = 0, bx1 = 0, by1 = 0;
  int next_label = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (mask.at(x, y) == 0.0f || label[idx] != 0) continue;
      ++next_label;
      int area = 0;
      int x0 = x, x1 = x, y0 = y, y1 = y;
      stack.assign(1, static_cast<int>(idx));
      label[idx] = next_label;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cx = cur % w;
        const int cy = cur / w;
        ++area;
        x0 = std::min(x0, cx);
        x1 = std::max(x1, cx);
        y0 = std::min(y0, cy);
        y1 = std::max(y1, cy);
        const int nbr[4][2] = {{cx - 1, cy}, {cx + 1, cy}, {cx, cy - 1}, {cx, cy + 1}};
        for (const auto& n : nbr) {
          if (n[0] < 0 || n[1] < 0 || n[0] >= w || n[1] >= h) continue;
          const std::size_t ni = static_cast<std::size_t>(n[1]) * w + n[0];
          if (label[ni] != 0 || mask.at(n[0], n[1]) == 0.0f) continue;
          label[ni] = next_label;
          stack.push_back(static_cast<int>(ni));
        }
      }
      if (area > best_area) {
        best_area = area;
        bx0 = x0;
        bx1 = x1;
        by0 = y0;
        by1 = y1;
      }
    }
  }
  if (best_area == 0 || best_area < min_area) return std::nullopt;
  SubjectBox out;
  out.box = {bx0 - 0.5, by0 - 0.5, bx1 + 0.5, by1 + 0.5};
  out.confidence = best_area / (out.box.width() * out.box.height());
  return out;
}

}  // namespace v2r
