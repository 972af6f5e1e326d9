#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "v2r/geometry.hpp"
#include "v2r/image.hpp"
#include "v2r/media.hpp"

namespace v2r {

/// Reproducible randomness: std::mt19937_64 (fully specified by the C++
/// standard) with our own uniform and Box-Muller transforms, since the
/// std distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1): top 53 bits of one draw.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal; polar-free Box-Muller, second value cached.
  double normal();
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// Stream seed for (seed, index) pairs so frames can be generated
/// independently of one another.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

enum class MotionPreset { Static, Sway, Dual };

MotionPreset parse_motion_preset(const std::string& name);

struct SceneParams {
  std::uint64_t seed = 1;
  int frames = 10;
  int width = 640;
  int height = 480;
  double noise_sigma = 0.0;
  double blur_sigma = 0.0;
  int marker_side = 31;
  MotionPreset motion = MotionPreset::Sway;
  /// Feed frame size the manifest homographies map from.
  int feed_width = 320;
  int feed_height = 240;
};

/// Feed rectangle corners (pixel centers): (0,0), (w-1,0), (w-1,h-1), (0,h-1).
std::array<Point2, 4> feed_rect(int width, int height);

/// Renders scene frames on demand. Frame k depends only on (params, k).
class SceneGenerator {
 public:
  /// Throws InvalidArgument if any frame's markers would leave the frame.
  explicit SceneGenerator(SceneParams params);

  const SceneParams& params() const { return params_; }
  int mirror_count() const;

  /// Corner positions (TL, TR, BR, BL) of `mirror` at frame k.
  std::array<Point2, 4> quad(int frame, int mirror) const;
  Image frame(int k) const;
  /// One record per mirror; subject fields zero.
  std::vector<ManifestRecord> truth(int k) const;

 private:
  SceneParams params_;
  Image background_;
  double phase_[4] = {};
};

struct FeedParams {
  std::uint64_t seed = 1;
  int frames = 10;
  int width = 320;
  int height = 240;
};

/// Flat background with a moving textured subject; frame 0 is empty.
class FeedGenerator {
 public:
  explicit FeedGenerator(FeedParams params);

  const FeedParams& params() const { return params_; }
  Image frame(int k) const;
  /// Subject box in continuous coordinates; nullopt on frame 0.
  std::optional<Box> subject(int k) const;

 private:
  FeedParams params_;
  double phase_[2] = {};
};

struct SynthOutput {
  FrameSequence scene;
  FrameSequence feed;
  std::vector<ManifestRecord> manifest;
};

/// Scene and feed sequences with a manifest that carries the feed subject
/// box on each scene record.
SynthOutput synth_pair(const SceneParams& scene, std::uint64_t feed_seed);

struct SceneTruth {
  FrameSequence frames;
  std::vector<ManifestRecord> manifest;
};
SceneTruth synth_scene(const SceneParams& params);

struct FeedTruth {
  FrameSequence frames;
  std::vector<std::optional<Box>> subjects;
};
FeedTruth synth_feed(const FeedParams& params);

}  // namespace v2r
