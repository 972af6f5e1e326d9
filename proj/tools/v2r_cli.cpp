// v2r: synth, detect, compose, calibrate, bench.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "v2r/compositor.hpp"
#include "v2r/config.hpp"
#include "v2r/error.hpp"
#include "v2r/media.hpp"
#include "v2r/runner.hpp"
#include "v2r/synth.hpp"

namespace fs = std::filesystem;
using namespace v2r;

namespace {

enum Exit { kOk = 0, kFail = 1, kUsage = 2 };

// Thrown for bad flag values found after CLI11 parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Builds into `<dir>.partial`, then swaps it into place.
class StagedDir {
 public:
  explicit StagedDir(fs::path dir) : final_(std::move(dir)), tmp_(final_.string() + ".partial") {
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }
  const fs::path& path() const { return tmp_; }
  void commit() {
    fs::remove_all(final_);
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path tmp_;
  bool committed_ = false;
};

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".partial";
  write_text_file(tmp, text);
  fs::rename(tmp, path);
}

// A bad config is a usage problem, not an operational one.
Config load_config_or_default(const std::string& path) {
  if (path.empty()) return Config{};
  try {
    Config c = load_config(path);
    c.validate();
    return c;
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw UsageError(path + ": " + e.what());
  }
}

fs::path resolve_near(const std::string& config_path, const std::string& p) {
  fs::path q(p);
  if (q.is_absolute() || config_path.empty()) return q;
  return fs::path(config_path).parent_path() / q;
}

// --------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int frames = 10;
  std::uint64_t seed = 1;
  double noise = 0.0;
  double blur = 0.0;
  std::string preset = "sway";
  int width = 640;
  int height = 480;
  int feed_width = 320;
  int feed_height = 240;
  int marker_side = 31;
};

int cmd_synth(const SynthArgs& a) {
  if (a.frames < 1) throw UsageError("--frames must be >= 1");
  SceneParams p;
  p.seed = a.seed;
  p.frames = a.frames;
  p.width = a.width;
  p.height = a.height;
  p.noise_sigma = a.noise;
  p.blur_sigma = a.blur;
  p.marker_side = a.marker_side;
  p.feed_width = a.feed_width;
  p.feed_height = a.feed_height;
  std::optional<SceneGenerator> scene_gen;
  std::optional<FeedGenerator> feed_gen;
  try {
    p.motion = parse_motion_preset(a.preset);
    scene_gen.emplace(p);
    feed_gen.emplace(FeedParams{a.seed, a.frames, a.feed_width, a.feed_height});
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const SceneGenerator& scene = *scene_gen;
  const FeedGenerator& feed = *feed_gen;

  StagedDir out(a.out);
  fs::create_directories(out.path() / "scene");
  fs::create_directories(out.path() / "feed");
  std::vector<ManifestRecord> manifest;
  for (int k = 0; k < a.frames; ++k) {
    write_ppm(scene.frame(k), out.path() / "scene" / frame_name(k));
    write_ppm(feed.frame(k), out.path() / "feed" / frame_name(k));
    const auto box = feed.subject(k);
    for (auto& r : scene.truth(k)) {
      if (box) r.subject = *box;
      manifest.push_back(r);
    }
  }
  write_text_file(out.path() / "manifest.txt", format_manifest(manifest));
  out.commit();
  return kOk;
}

// --------------------------------------------------------------------------

int cmd_detect(const std::string& scene_dir, const std::string& config_path,
               const std::string& out_path) {
  const Config cfg = load_config_or_default(config_path);
  if (!fs::is_directory(scene_dir)) throw IoError("scene directory not found: " + scene_dir);
  const SequenceReader scene(scene_dir);
  const MarkerDetector det(make_template_bank(cfg.detect.marker_side, cfg.detect.mirrors),
                           cfg.detect);
  std::string text;
  char line[160];
  for (int k = 0; k < scene.size(); ++k) {
    for (const auto& h : det.detect(scene.frame(k))) {
      std::snprintf(line, sizeof line, "%d %d %.6f %.6f %.6f\n", k, h.class_id, h.center.x,
                    h.center.y, h.score);
      text += line;
    }
  }
  write_file_atomic(out_path, text);
  return kOk;
}

// --------------------------------------------------------------------------

ComposeConfig make_compose_config(const std::string& config_path) {
  ComposeConfig cc;
  cc.settings = load_config_or_default(config_path);
  if (!cc.settings.rectify_path.empty()) {
    cc.rectify = parse_homography(
        read_text_file(resolve_near(config_path, cc.settings.rectify_path)));
  }
  if (!cc.settings.background_path.empty()) {
    cc.background = read_ppm(resolve_near(config_path, cc.settings.background_path));
  }
  return cc;
}

int cmd_compose(const std::string& scene_dir, const std::string& feed_dir,
                const std::string& config_path, const std::string& out_dir,
                const std::string& stats_path) {
  ComposeConfig cc = make_compose_config(config_path);
  for (const auto& d : {scene_dir, feed_dir}) {
    if (!fs::is_directory(d)) throw IoError("directory not found: " + d);
  }
  const SequenceReader scene(scene_dir);
  const SequenceReader feed(feed_dir);
  const int n = std::min(scene.size(), feed.size());
  if (scene.size() != feed.size()) {
    std::cerr << "warning: scene has " << scene.size() << " frames, feed has " << feed.size()
              << "; composing the first " << n << "\n";
  }
  Compositor comp(std::move(cc));
  StagedDir out(out_dir);
  std::string stats;
  run_sequence(
      comp, n, [&](int k) { return scene.frame(k); }, [&](int k) { return feed.frame(k); },
      [&](int k, FrameResult&& r) {
        write_ppm(r.image, out.path() / frame_name(k));
        stats += format_stats(r.stats) + "\n";
        for (const auto& rep : r.stats.reports) {
          if (!rep.error.empty()) {
            std::cerr << "frame " << k << " mirror " << rep.mirror_id << ": " << rep.error << "\n";
          }
        }
      });
  if (!stats_path.empty()) write_file_atomic(stats_path, stats);
  out.commit();
  return kOk;
}

// --------------------------------------------------------------------------

int cmd_calibrate(const std::string& pairs_path, const std::string& out_path) {
  const std::string text = read_text_file(pairs_path);
  std::vector<Correspondence> pairs;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double v[4];
    int got = 0;
    while (got < 4 && ls >> v[got]) ++got;
    std::string rest;
    if (got == 0 && !(ls.clear(), ls >> rest)) continue;
    if (got != 4 || (ls >> rest)) throw ParseError("expected 'x y x2 y2'", lineno, "line");
    pairs.push_back({{v[0], v[1]}, {v[2], v[3]}});
  }
  if (pairs.size() < 4) {
    throw InvalidArgument("need at least 4 correspondences, got " + std::to_string(pairs.size()));
  }
  write_file_atomic(out_path, format_homography(dlt_homography(pairs)));
  return kOk;
}

// --------------------------------------------------------------------------

int cmd_bench(int width, int height, int frames, std::uint64_t seed) {
  if (frames < 1) throw UsageError("--frames must be >= 1");
  SceneParams p;
  p.seed = seed;
  p.frames = frames;
  p.width = width;
  p.height = height;
  p.noise_sigma = 0.02;
  p.blur_sigma = 1.0;
  p.feed_width = width / 2;
  p.feed_height = height / 2;
  const SceneGenerator scene(p);
  const FeedGenerator feed({seed, frames, p.feed_width, p.feed_height});
  Compositor comp(ComposeConfig{});

  // Frames are rendered outside the timed region; only compositing counts.
  using Clock = std::chrono::steady_clock;
  double total = 0.0;
  double detect = 0.0;
  double apply = 0.0;
  int alive = 0;
  for (int k = 0; k < frames; ++k) {
    const Image s = scene.frame(k);
    const Image f = feed.frame(k);
    const auto t0 = Clock::now();
    const Detections det = comp.detect(s);
    const auto t1 = Clock::now();
    const FrameResult r = comp.apply(s, f, det);
    const auto t2 = Clock::now();
    detect += std::chrono::duration<double>(t1 - t0).count();
    apply += std::chrono::duration<double>(t2 - t1).count();
    total += std::chrono::duration<double>(t2 - t0).count();
    alive += r.stats.tracks > 0;
  }
  std::printf("fps=%.2f\n", frames / total);
  std::printf("frames=%d\n", frames);
  std::printf("detect_ms=%.3f\n", 1e3 * detect / frames);
  std::printf("apply_ms=%.3f\n", 1e3 * apply / frames);
  std::printf("total_ms=%.3f\n", 1e3 * total / frames);
  std::printf("tracked_frames=%d\n", alive);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"v2r: composite a camera feed into mirror/window regions of a scene"};
  app.require_subcommand(1);
  app.allow_windows_style_options(false);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene, feed and manifest");
  synth->add_option("--out", sa.out, "Output directory (scene/, feed/, manifest.txt)")->required();
  synth->add_option("--frames", sa.frames, "Frame count")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  synth->add_option("--noise", sa.noise, "Gaussian noise sigma")->capture_default_str();
  synth->add_option("--blur", sa.blur, "Gaussian blur sigma")->capture_default_str();
  synth->add_option("--preset", sa.preset, "Motion: static, sway, dual")->capture_default_str();
  synth->add_option("--width", sa.width, "Scene width")->capture_default_str();
  synth->add_option("--height", sa.height, "Scene height")->capture_default_str();
  synth->add_option("--feed-width", sa.feed_width, "Feed width")->capture_default_str();
  synth->add_option("--feed-height", sa.feed_height, "Feed height")->capture_default_str();
  synth->add_option("--marker-side", sa.marker_side, "Marker side (odd)")->capture_default_str();

  std::string scene_dir, feed_dir, config_path, out_path, stats_path, pairs_path;
  auto* detect = app.add_subcommand("detect", "Detect markers; writes `frame class cx cy score`");
  detect->add_option("--scene", scene_dir, "Scene frame directory")->required();
  detect->add_option("--config", config_path, "Config file");
  detect->add_option("--out", out_path, "Output text file")->required();

  auto* compose = app.add_subcommand("compose", "Composite the feed into the scene");
  compose->add_option("--scene", scene_dir, "Scene frame directory")->required();
  compose->add_option("--feed", feed_dir, "Feed frame directory")->required();
  compose->add_option("--config", config_path, "Config file");
  compose->add_option("--out", out_path, "Output frame directory")->required();
  compose->add_option("--stats", stats_path, "Per-frame stats file");

  auto* calibrate = app.add_subcommand("calibrate", "Fit a homography to `x y x2 y2` lines");
  calibrate->add_option("--pairs", pairs_path, "Correspondence file")->required();
  calibrate->add_option("--out", out_path, "Homography file")->required();

  int bw = 640, bh = 480, bframes = 300;
  std::uint64_t bseed = 1;
  auto* bench = app.add_subcommand("bench", "Measure end-to-end throughput");
  bench->add_option("--width", bw, "Scene width")->capture_default_str();
  bench->add_option("--height", bh, "Scene height")->capture_default_str();
  bench->add_option("--frames", bframes, "Frame count")->capture_default_str();
  bench->add_option("--seed", bseed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*detect) return cmd_detect(scene_dir, config_path, out_path);
    if (*compose) return cmd_compose(scene_dir, feed_dir, config_path, out_path, stats_path);
    if (*calibrate) return cmd_calibrate(pairs_path, out_path);
    if (*bench) return cmd_bench(bw, bh, bframes, bseed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFail;
  }
  return kUsage;
}
