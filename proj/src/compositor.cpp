#include "v2r/compositor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/LU>

#include "v2r/error.hpp"
#include "v2r/filters.hpp"
#include "v2r/synth.hpp"

namespace v2r {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Min filter over a (2r+1)^2 square; pixels outside the image count as 0.
Image erode(const Image& mask, int r) {
  const int w = mask.width();
  const int h = mask.height();
  Image tmp(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float m = 1.0f;
      for (int i = -r; i <= r && m > 0.0f; ++i) {
        const int xx = x + i;
        m = (xx < 0 || xx >= w) ? 0.0f : std::min(m, mask.at(xx, y));
      }
      tmp.at(x, y) = m;
    }
  }
  Image out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float m = 1.0f;
      for (int j = -r; j <= r && m > 0.0f; ++j) {
        const int yy = y + j;
        m = (yy < 0 || yy >= h) ? 0.0f : std::min(m, tmp.at(x, yy));
      }
      out.at(x, y) = m;
    }
  }
  return out;
}

// Bilinear weights for a point already clamped into [0,w-1] x [0,h-1].
struct Bilinear {
  int x0, y0, x1, y1;
  double fx, fy;
  Bilinear(double x, double y, int w, int h) {
    x0 = std::min(static_cast<int>(x), w - 1);
    y0 = std::min(static_cast<int>(y), h - 1);
    x1 = std::min(x0 + 1, w - 1);
    y1 = std::min(y0 + 1, h - 1);
    fx = x - x0;
    fy = y - y0;
  }
  double sample(const Image& img, int c) const {
    const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    return (1.0 - fy) * top + fy * bot;
  }
};

bool is_identity(const Homography& h) {
  return h.matrix() == Mat3::Identity();
}

Layer empty_layer(int channels) {
  return Layer{Image(1, 1, channels), Image(1, 1, 1, 0.0f), 0, 0};
}

struct PreparedFeed {
  Image image;
  std::optional<Image> mask;
};

PreparedFeed prepare_feed(const Image& feed, const ComposeConfig& cfg) {
  PreparedFeed out;
  if (cfg.rectify && !is_identity(*cfg.rectify)) {
    Layer l = rectify_feed(feed, *cfg.rectify);
    out.image = std::move(l.image);
    out.mask = std::move(l.mask);
  } else {
    out.image = feed;
  }
  const auto& s = cfg.settings;
  Crop c = crop_field_angle(out.image, s.fov_deg, s.focal_px);
  out.image = std::move(c.image);
  if (out.mask) out.mask = crop_field_angle(*out.mask, s.fov_deg, s.focal_px).image;
  return out;
}

}  // namespace

Homography mirror_flip(int feed_width) {
  Mat3 f;
  f << -1.0, 0.0, feed_width - 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0;
  return Homography(f);
}

Layer warp_by(const Image& feed, const Homography& h, std::span<const Point2> polygon,
              int out_w, int out_h, const Image* feed_mask) {
  if (polygon.size() < 3) throw InvalidArgument("warp polygon needs at least 3 corners");
  if (feed_mask && (feed_mask->width() != feed.width() || feed_mask->height() != feed.height())) {
    throw InvalidArgument("feed mask dimensions differ from the feed");
  }
  double minx = std::numeric_limits<double>::infinity();
  double miny = minx;
  double maxx = -minx;
  double maxy = -minx;
  for (const auto& p : polygon) {
    minx = std::min(minx, p.x);
    miny = std::min(miny, p.y);
    maxx = std::max(maxx, p.x);
    maxy = std::max(maxy, p.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(minx)) - 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(miny)) - 1);
  const int x1 = std::min(out_w - 1, static_cast<int>(std::ceil(maxx)) + 1);
  const int y1 = std::min(out_h - 1, static_cast<int>(std::ceil(maxy)) + 1);
  if (x1 < x0 || y1 < y0) return empty_layer(feed.channels());

  // Signed distance to each edge, positive inside (clockwise on screen).
  struct Edge {
    double ax, ay, nx, ny;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Point2 a = polygon[i];
    const Point2 b = polygon[(i + 1) % polygon.size()];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len == 0.0) throw DegenerateError("warp polygon has a zero-length edge");
    edges.push_back({a.x, a.y, -(b.y - a.y) / len, (b.x - a.x) / len});
  }

  const Mat3 inv = h.matrix().inverse();
  const int fw = feed.width();
  const int fh = feed.height();
  const int ch = feed.channels();
  Layer layer{Image(x1 - x0 + 1, y1 - y0 + 1, ch), Image(x1 - x0 + 1, y1 - y0 + 1, 1, 0.0f), x0, y0};
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& e : edges) {
        d = std::min(d, (x - e.ax) * e.nx + (y - e.ay) * e.ny);
      }
      // One-pixel ramp inside the edges; centers on or outside stay untouched.
      const double cover = std::min(d, 1.0);
      if (cover <= 0.0) continue;
      const double sw = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
      if (!(sw > 1e-12)) continue;
      double sx = (inv(0, 0) * x + inv(0, 1) * y + inv(0, 2)) / sw;
      double sy = (inv(1, 0) * x + inv(1, 1) * y + inv(1, 2)) / sw;
      // Up to a pixel of slack at the feed border; the polygon mask owns the
      // edge antialiasing.
      if (sx < -1.0 || sy < -1.0 || sx > fw || sy > fh) continue;
      sx = std::clamp(sx, 0.0, fw - 1.0);
      sy = std::clamp(sy, 0.0, fh - 1.0);
      const Bilinear b(sx, sy, fw, fh);
      double m = cover;
      if (feed_mask) m *= b.sample(*feed_mask, 0);
      const int lx = x - x0;
      const int ly = y - y0;
      for (int c = 0; c < ch; ++c) layer.image.at(lx, ly, c) = static_cast<float>(b.sample(feed, c));
      layer.mask.at(lx, ly) = static_cast<float>(m);
    }
  }
  return layer;
}

Layer warp_into_quad(const Image& feed, const MirrorQuad& quad, double s, Point2 anchor,
                     bool flip, int out_w, int out_h, const Image* feed_mask) {
  validate_quad(quad);
  Homography base = quad_to_quad(feed_rect(feed.width(), feed.height()), quad.corners);
  if (flip) base = compose(base, mirror_flip(feed.width()));
  const Homography h = scaled_homography(base, anchor, s);
  return warp_by(feed, h, quad.corners, out_w, out_h, feed_mask);
}

Layer rectify_feed(const Image& feed, const Homography& h_rect) {
  const int w = feed.width();
  const int h = feed.height();
  if (is_identity(h_rect)) return Layer{feed, Image(w, h, 1, 1.0f), 0, 0};
  const Mat3 inv = h_rect.matrix().inverse();
  if (!inv.allFinite()) throw DegenerateError("rectifying homography is singular");
  Layer out{Image(w, h, feed.channels()), Image(w, h, 1, 0.0f), 0, 0};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sw = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
      if (!(std::abs(sw) > 1e-12)) continue;
      const double sx = (inv(0, 0) * x + inv(0, 1) * y + inv(0, 2)) / sw;
      const double sy = (inv(1, 0) * x + inv(1, 1) * y + inv(1, 2)) / sw;
      const auto px = sample_bilinear(feed, sx, sy);
      if (!px) continue;
      for (int c = 0; c < feed.channels(); ++c) out.image.at(x, y, c) = (*px)[c];
      out.mask.at(x, y) = 1.0f;
    }
  }
  return out;
}

void blend_into(Image& scene, const Layer& layer, double feather_px) {
  if (!(feather_px >= 0.0)) throw InvalidArgument("feather must be >= 0");
  if (layer.image.width() != layer.mask.width() || layer.image.height() != layer.mask.height() ||
      layer.mask.channels() != 1) {
    throw InvalidArgument("layer mask and image dimensions differ");
  }
  if (layer.image.channels() != scene.channels() || layer.x0 < 0 || layer.y0 < 0 ||
      layer.x0 + layer.image.width() > scene.width() ||
      layer.y0 + layer.image.height() > scene.height()) {
    throw InvalidArgument("layer does not fit the scene");
  }
  Image mask = layer.mask;
  if (feather_px > 0.0) {
    const double sigma = 0.5 * feather_px;
    const int r = gaussian_kernel(sigma).radius();
    // Erode by the blur radius so the feathered mask never leaves the quad.
    mask = gaussian_filter(erode(mask, r), sigma);
  }
  const int ch = scene.channels();
  for (int y = 0; y < mask.height(); ++y) {
    const float* m = mask.row(y);
    const float* l = layer.image.row(y);
    float* d = scene.row(layer.y0 + y) + static_cast<std::size_t>(layer.x0) * ch;
    for (int x = 0; x < mask.width(); ++x) {
      if (m[x] <= 0.0f) continue;
      for (int c = 0; c < ch; ++c) {
        const double v = (1.0 - m[x]) * d[x * ch + c] + double(m[x]) * l[x * ch + c];
        d[x * ch + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

Image blend(const Image& scene, const Layer& layer, double feather_px) {
  Image out = scene;
  blend_into(out, layer, feather_px);
  return out;
}

std::string format_stats(const FrameStats& st) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "frame=%d tracks=%d s=%.6f detect_ms=%.3f warp_ms=%.3f total_ms=%.3f",
                st.frame, st.tracks, st.s, st.detect_ms, st.warp_ms, st.total_ms);
  return buf;
}

// ---------------------------------------------------------------------------

Compositor::Compositor(ComposeConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.settings.validate();
  const auto& d = cfg_.settings.detect;
  detector_ = std::make_unique<MarkerDetector>(make_template_bank(d.marker_side, d.mirrors), d);
}

Detections Compositor::detect(const Image& scene) const {
  const auto t0 = Clock::now();
  Detections det;
  det.hits = detector_->detect(scene);
  const auto& d = cfg_.settings.detect;
  if (d.single_marker) {
    det.quads = single_marker_quads(det.hits, d.single_width, d.single_height);
  } else {
    std::map<int, std::vector<MarkerHit>> groups;
    for (const auto& h : det.hits) groups[h.class_id / 4].push_back(h);
    for (const auto& [mirror, hits] : groups) {
      try {
        const QuadAssembly qa = corners_to_quad(hits);
        det.quads.insert(det.quads.end(), qa.quads.begin(), qa.quads.end());
      } catch (const DegenerateError& e) {
        det.rejected[mirror] = e.what();
      }
    }
  }
  det.detect_ms = ms_since(t0);
  return det;
}

FrameResult Compositor::apply(const Image& scene, const Image& feed, const Detections& det) {
  const auto t0 = Clock::now();
  const auto& s = cfg_.settings;
  FrameResult res{scene, {}};
  res.stats.frame = frame_index_++;
  res.stats.detections = static_cast<int>(det.hits.size());
  res.stats.detect_ms = det.detect_ms;

  const auto tw = Clock::now();
  const PreparedFeed pf = prepare_feed(feed, cfg_);
  if (!prepared_background_) {
    const Image& bg = cfg_.background ? *cfg_.background : feed;
    if (bg.width() != feed.width() || bg.height() != feed.height()) {
      throw InvalidArgument("subject background and feed dimensions differ");
    }
    prepared_background_ = prepare_feed(bg, cfg_).image;
  }
  const int fw = pf.image.width();
  const int fh = pf.image.height();
  const auto rect = feed_rect(fw, fh);
  const bool flip = s.surface == SurfaceKind::Mirror;
  const Homography flip_h = mirror_flip(fw);
  const auto subject =
      estimate_subject_bbox(pf.image, *prepared_background_, s.subject_thresh, s.subject_min_area);

  std::map<int, const MirrorQuad*> found;
  for (const auto& q : det.quads) found[q.mirror_id] = &q;
  std::vector<int> ids;
  for (const auto& [id, _] : tracks_) ids.push_back(id);
  for (const auto& [id, _] : found) {
    if (!tracks_.count(id)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());

  for (const int id : ids) {
    TrackReport rep;
    rep.mirror_id = id;
    TrackState prev = tracks_.count(id) ? tracks_.at(id) : TrackState{};
    prev.mirror_id = id;
    try {
      const auto it = found.find(id);
      if (it != found.end()) {
        const MirrorQuad& quad = *it->second;
        const Homography h_new = quad_to_quad(rect, quad.corners);
        std::optional<double> s_new;
        if (subject) {
          const Point2 anchor = subject->box.center();
          anchors_[id] = anchor;
          const Homography base = flip ? compose(h_new, flip_h) : h_new;
          const ScaleResult sr = resolve_scale(base, anchor, subject->box, quad.corners,
                                               s.margin, s.scale);
          s_new = sr.s;
          rep.out_of_sight = sr.out_of_sight;
        }
        tracks_[id] = update_track(prev, quad, h_new, s_new, s.track);
        rep.detected = true;
      } else {
        tracks_[id] = update_track(prev, std::nullopt, std::nullopt, std::nullopt, s.track);
        if (const auto rj = det.rejected.find(id); rj != det.rejected.end()) {
          rep.error = rj->second;
          ++res.stats.failed_tracks;
        }
      }
      const TrackState& st = tracks_.at(id);
      rep.alive = st.alive;
      rep.s = st.smoothed_s;
      rep.h = st.smoothed_h;
      if (st.alive) {
        MirrorQuad smoothed;
        smoothed.mirror_id = id;
        for (int i = 0; i < 4; ++i) smoothed.corners[i] = apply_homography(st.smoothed_h, rect[i]);
        const Point2 anchor = anchors_.count(id) ? anchors_.at(id) : Point2{0.5 * (fw - 1), 0.5 * (fh - 1)};
        const Homography base = flip ? compose(st.smoothed_h, flip_h) : st.smoothed_h;
        const Homography hw = scaled_homography(base, anchor, st.smoothed_s);
        const Layer layer = warp_by(pf.image, hw, smoothed.corners, scene.width(), scene.height(),
                                    pf.mask ? &*pf.mask : nullptr);
        blend_into(res.image, layer, s.feather_px);
      }
    } catch (const Error& e) {
      // One bad mirror must not blank the frame.
      rep.error = e.what();
      ++res.stats.failed_tracks;
    }
    res.stats.reports.push_back(rep);
  }

  for (const auto& rep : res.stats.reports) {
    if (!rep.alive) continue;
    if (res.stats.tracks == 0) res.stats.s = rep.s;
    ++res.stats.tracks;
  }
  res.stats.warp_ms = ms_since(tw);
  res.stats.total_ms = res.stats.detect_ms + ms_since(t0);
  return res;
}

}  // namespace v2r
