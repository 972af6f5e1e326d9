#include "v2r/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "v2r/error.hpp"
#include "v2r/filters.hpp"
#include "v2r/marker.hpp"

namespace v2r {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct QuadShape {
  double cx, cy, hw, hh;
};

}  // namespace

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(kTwoPi * u2);
  return r * std::cos(kTwoPi * u2);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index * 0xD1B54A32D192ED03ull));
}

MotionPreset parse_motion_preset(const std::string& name) {
  if (name == "static") return MotionPreset::Static;
  if (name == "sway") return MotionPreset::Sway;
  if (name == "dual") return MotionPreset::Dual;
  throw InvalidArgument("unknown motion preset '" + name + "' (static, sway, dual)");
}

std::array<Point2, 4> feed_rect(int width, int height) {
  const double w = width - 1;
  const double h = height - 1;
  return {Point2{0.0, 0.0}, Point2{w, 0.0}, Point2{w, h}, Point2{0.0, h}};
}

// ---------------------------------------------------------------------------

SceneGenerator::SceneGenerator(SceneParams params) : params_(params) {
  const auto& p = params_;
  if (p.width < 64 || p.height < 64) throw InvalidArgument("scene must be at least 64x64");
  if (p.frames < 0) throw InvalidArgument("frame count must be >= 0");
  if (p.noise_sigma < 0.0 || p.blur_sigma < 0.0) {
    throw InvalidArgument("noise and blur must be >= 0");
  }
  if (p.marker_side < 15 || p.marker_side % 2 == 0) {
    throw InvalidArgument("marker side must be odd and >= 15");
  }
  if (p.feed_width < 2 || p.feed_height < 2) throw InvalidArgument("feed must be at least 2x2");

  Rng rng(mix_seed(p.seed, 0xBAC6u));
  for (double& ph : phase_) ph = rng.uniform(0.0, kTwoPi);

  // Smooth low-contrast texture: a handful of plane waves per channel.
  struct Wave {
    double kx, ky, phase, amp[3];
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 5; ++i) {
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double lambda = rng.uniform(40.0, 160.0);
    Wave wv{};
    wv.kx = kTwoPi * std::cos(theta) / lambda;
    wv.ky = kTwoPi * std::sin(theta) / lambda;
    wv.phase = rng.uniform(0.0, kTwoPi);
    for (double& a : wv.amp) a = rng.uniform(0.01, 0.035);
    waves.push_back(wv);
  }
  const double base[3] = {rng.uniform(0.38, 0.5), rng.uniform(0.38, 0.5), rng.uniform(0.38, 0.5)};
  background_ = Image(p.width, p.height, 3);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = base[c];
        for (const auto& wv : waves) v += wv.amp[c] * std::sin(wv.kx * x + wv.ky * y + wv.phase);
        background_.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  const double pad = p.marker_side / 2.0 + 2.0;
  for (int k = 0; k < std::max(p.frames, 1); ++k) {
    for (int m = 0; m < mirror_count(); ++m) {
      for (const auto& c : quad(k, m)) {
        if (c.x < pad || c.y < pad || c.x > p.width - 1 - pad || c.y > p.height - 1 - pad) {
          throw InvalidArgument("marker trajectory leaves the frame at frame " +
                                std::to_string(k));
        }
      }
    }
  }
}

int SceneGenerator::mirror_count() const {
  return params_.motion == MotionPreset::Dual ? 2 : 1;
}

std::array<Point2, 4> SceneGenerator::quad(int frame, int mirror) const {
  const double w = params_.width;
  const double h = params_.height;
  QuadShape s{};
  if (params_.motion == MotionPreset::Dual) {
    s = {w * (mirror == 0 ? 0.27 : 0.73), 0.5 * h, 0.17 * w, 0.25 * h};
  } else {
    s = {0.5 * w + 0.02 * w * std::sin(phase_[0]), 0.5 * h + 0.02 * h * std::cos(phase_[1]),
         0.28 * w, 0.28 * h};
  }
  std::array<Point2, 4> q = {Point2{s.cx - s.hw, s.cy - s.hh}, Point2{s.cx + s.hw, s.cy - s.hh},
                             Point2{s.cx + s.hw, s.cy + s.hh}, Point2{s.cx - s.hw, s.cy + s.hh}};
  if (params_.motion == MotionPreset::Static) return q;

  const double k = frame;
  const double amp = params_.motion == MotionPreset::Dual ? 0.5 : 1.0;
  const double tx = amp * 0.05 * w * std::sin(kTwoPi * k / 60.0 + phase_[0]);
  const double ty = amp * 0.04 * h * std::sin(kTwoPi * k / 85.0 + phase_[1]);
  // Slow perspective tilt: the right edge grows, the left edge leans.
  const double tilt = amp * 0.03 * h * std::sin(kTwoPi * k / 120.0 + phase_[2]);
  const double lean = amp * 0.02 * w * std::sin(kTwoPi * k / 150.0 + phase_[3]);
  for (auto& c : q) c = c + Point2{tx, ty};
  q[1].y -= tilt;
  q[2].y += tilt;
  q[0].x += lean;
  q[3].x -= lean;
  return q;
}

Image SceneGenerator::frame(int k) const {
  Image img = background_;
  for (int m = 0; m < mirror_count(); ++m) {
    const auto q = quad(k, m);
    for (int role = 0; role < 4; ++role) {
      paint_marker(img, q[role], params_.marker_side, 4 * m + role);
    }
  }
  if (params_.blur_sigma > 0.0) img = gaussian_filter(img, params_.blur_sigma);
  if (params_.noise_sigma > 0.0) {
    Rng rng(mix_seed(params_.seed, static_cast<std::uint64_t>(k) + 1));
    for (float& v : img.data()) {
      v = static_cast<float>(std::clamp(v + params_.noise_sigma * rng.normal(), 0.0, 1.0));
    }
  }
  return img;
}

std::vector<ManifestRecord> SceneGenerator::truth(int k) const {
  std::vector<ManifestRecord> out;
  const auto rect = feed_rect(params_.feed_width, params_.feed_height);
  for (int m = 0; m < mirror_count(); ++m) {
    ManifestRecord r;
    r.frame = k;
    r.mirror_id = m;
    r.quad = quad(k, m);
    r.h = quad_to_quad(rect, r.quad);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------

FeedGenerator::FeedGenerator(FeedParams params) : params_(params) {
  if (params_.width < 16 || params_.height < 16) throw InvalidArgument("feed must be at least 16x16");
  if (params_.frames < 0) throw InvalidArgument("frame count must be >= 0");
  Rng rng(mix_seed(params_.seed, 0xFEEDu));
  for (double& ph : phase_) ph = rng.uniform(0.0, kTwoPi);
}

std::optional<Box> FeedGenerator::subject(int k) const {
  if (k == 0) return std::nullopt;
  const double w = params_.width;
  const double h = params_.height;
  const int sw = static_cast<int>(std::lround(0.3 * w));
  const int sh = static_cast<int>(std::lround(0.45 * h));
  const double cx = 0.5 * w + 0.22 * w * std::sin(kTwoPi * k / 70.0 + phase_[0]);
  const double cy = 0.5 * h + 0.1 * h * std::sin(kTwoPi * k / 50.0 + phase_[1]);
  const int x0 = std::clamp(static_cast<int>(std::lround(cx - sw / 2.0)), 0, params_.width - sw);
  const int y0 = std::clamp(static_cast<int>(std::lround(cy - sh / 2.0)), 0, params_.height - sh);
  return Box{x0 - 0.5, y0 - 0.5, x0 + sw - 0.5, y0 + sh - 0.5};
}

Image FeedGenerator::frame(int k) const {
  Image img(params_.width, params_.height, 3);
  const float bg[3] = {0.25f, 0.30f, 0.35f};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) img.data()[3 * i + c] = bg[c];
  }
  const auto box = subject(k);
  if (!box) return img;
  const float a[3] = {0.95f, 0.75f, 0.55f};
  const float b[3] = {0.75f, 0.95f, 0.65f};
  const int x0 = static_cast<int>(box->x0 + 0.5);
  const int y0 = static_cast<int>(box->y0 + 0.5);
  const int x1 = static_cast<int>(box->x1 - 0.5);
  const int y1 = static_cast<int>(box->y1 - 0.5);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const bool check = (((x - x0) / 6) + ((y - y0) / 6)) % 2 == 0;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = check ? a[c] : b[c];
    }
  }
  return img;
}

// ---------------------------------------------------------------------------

SceneTruth synth_scene(const SceneParams& params) {
  const SceneGenerator gen(params);
  SceneTruth out;
  for (int k = 0; k < params.frames; ++k) {
    out.frames.frames.push_back(gen.frame(k));
    for (auto& r : gen.truth(k)) out.manifest.push_back(r);
  }
  return out;
}

FeedTruth synth_feed(const FeedParams& params) {
  const FeedGenerator gen(params);
  FeedTruth out;
  for (int k = 0; k < params.frames; ++k) {
    out.frames.frames.push_back(gen.frame(k));
    out.subjects.push_back(gen.subject(k));
  }
  return out;
}

SynthOutput synth_pair(const SceneParams& scene, std::uint64_t feed_seed) {
  SceneTruth s = synth_scene(scene);
  FeedTruth f = synth_feed({feed_seed, scene.frames, scene.feed_width, scene.feed_height});
  for (auto& r : s.manifest) {
    if (const auto& box = f.subjects[r.frame]) r.subject = *box;
  }
  return {std::move(s.frames), std::move(f.frames), std::move(s.manifest)};
}

}  // namespace v2r
