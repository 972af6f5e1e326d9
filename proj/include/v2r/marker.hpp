#pragma once

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "v2r/filters.hpp"
#include "v2r/geometry.hpp"
#include "v2r/image.hpp"

namespace v2r {

/// Markers are quadrant-colored disks. class_id encodes
///   bit 0      quadrant phase (0: TL/BR black, 1: TL/BR white)
///   bits 1..2  inverted outer rim (bit 1) and inverted middle band (bit 2)
/// which gives 8 distinguishable classes. A mirror m uses classes 4m..4m+3
/// for its TL, TR, BR, BL corners.
inline constexpr int kMaxMarkerClasses = 8;

enum class CornerRole { TL = 0, TR = 1, BR = 2, BL = 3, Unassigned = 4 };

struct MarkerTemplate {
  int class_id = 0;
  int phase = 0;
  Image image;  // square, odd side, 1 channel

  int side() const { return image.width(); }
};

struct MarkerHit {
  Point2 center;
  double score = 0.0;
  int class_id = 0;
  double radius = 0.0;
  CornerRole role = CornerRole::Unassigned;
};

struct MirrorQuad {
  int mirror_id = 0;
  std::array<Point2, 4> corners;  // TL, TR, BR, BL

  /// Shoelace area; positive for clockwise order on screen (y down).
  double signed_area() const;
};

/// Minimum |signed area| of any corner triangle, in px^2.
inline constexpr double kQuadEpsilon = 1.0;

/// Intensity of a marker of `side` px and class `class_id` centered at
/// (dx,dy) relative to its center, averaged over a 4x4 supersampling grid.
/// Outside the disk the value is the 0.5 card background.
double marker_coverage(double dx, double dy, double side, int class_id);

MarkerTemplate render_marker(int side, int class_id);

/// Draws a marker card (the template's full square) centered at (cx,cy) onto
/// every channel of `img`.
void paint_marker(Image& img, Point2 center, int side, int class_id);

/// Zero-mean NCC at every center where the template fits entirely; other
/// positions hold 0. Windows with variance below 1e-8 also score 0.
ScoreMap ncc_score_map(const Image& gray, const MarkerTemplate& tpl);

/// Valid-center rectangle of an NCC map: [x0, x1] x [y0, y1] inclusive.
struct ValidRegion {
  int x0, y0, x1, y1;
};
ValidRegion ncc_valid_region(int img_w, int img_h, int tpl_side);

/// det(M) - k * trace(M)^2 of the Gaussian-weighted Sobel structure tensor.
ScoreMap harris_response(const Image& gray, double sigma_w, double k);

/// 1 where the Sobel magnitude reaches `thresh`, else 0.
ScoreMap edge_map(const Image& gray, double thresh);
ScoreMap edge_map(const Gradients& grads, double thresh);

struct Circle {
  double cx = 0.0;
  double cy = 0.0;
  int r = 0;
  int votes = 0;
};

/// Gradient-directed circle voting; peaks with votes >= vote_frac * 2*pi*r
/// after 3x3 spatial non-max suppression per radius, sorted by votes.
std::vector<Circle> hough_circles(const ScoreMap& edges, const Gradients& grads,
                                  int r_min, int r_max, double vote_frac);

struct DetectParams {
  double sigma = 1.0;
  int median_radius = 1;
  double ncc_thresh = 0.6;
  double verify_radius = 3.0;
  double harris_k = 0.05;
  double harris_sigma = 1.5;
  /// Harris maxima below this fraction of the strongest response in the
  /// verification window are ignored.
  double harris_rel = 0.1;
  int hough_r_min = 12;
  int hough_r_max = 18;
  double hough_vote_frac = 0.25;
  double edge_thresh = 0.04;
  int marker_side = 31;
  int mirrors = 1;
  /// Propose candidates by NCC on a 2x reduced frame, then score them with
  /// full-resolution NCC in a small window. Needs marker_side >= 31.
  bool pyramid = true;
  bool single_marker = false;
  double single_width = 120.0;
  double single_height = 90.0;
};

std::vector<MarkerTemplate> make_template_bank(int side, int mirrors);

/// Reusable detector: caches per-template spectra for the frame size it
/// sees. Safe to call detect() concurrently.
class MarkerDetector {
 public:
  MarkerDetector(std::vector<MarkerTemplate> bank, DetectParams params);
  ~MarkerDetector();
  MarkerDetector(const MarkerDetector&) = delete;
  MarkerDetector& operator=(const MarkerDetector&) = delete;

  std::vector<MarkerHit> detect(const Image& img) const;

  const std::vector<MarkerTemplate>& bank() const { return bank_; }
  const DetectParams& params() const { return params_; }

  /// Filtered gray frame exactly as detection sees it.
  Image preprocess(const Image& img) const;

  struct Spectra;  // FFT plans and template spectra for one frame size

 private:
  std::shared_ptr<const Spectra> spectra_for(int w, int h, bool coarse) const;

  std::vector<MarkerTemplate> bank_;
  DetectParams params_;
  mutable std::mutex mu_;
  mutable std::shared_ptr<const Spectra> cached_;
  std::vector<MarkerTemplate> coarse_bank_;  // empty when the pyramid is off
  mutable std::shared_ptr<const Spectra> cached_coarse_;
};

std::vector<MarkerHit> detect_markers(const Image& img,
                                      const std::vector<MarkerTemplate>& bank,
                                      const DetectParams& params);

struct Classification {
  int class_id = 0;
  double score = 0.0;
};

/// NCC of `patch` against every template; ties go to the lowest class_id.
Classification classify_marker(const Image& patch,
                               std::span<const MarkerTemplate> bank);

/// NCC of two equally sized gray images.
double ncc(const Image& a, const Image& b);

struct QuadAssembly {
  std::vector<MirrorQuad> quads;
  /// Mirrors with some but not all of their four corner classes.
  std::vector<int> incomplete;
};

/// Groups hits by class (4m + role) into one quad per complete mirror; the
/// best-scoring hit wins when a class repeats. Throws DegenerateError when a
/// complete set is collinear or not clockwise.
QuadAssembly corners_to_quad(std::span<const MarkerHit> hits);

/// Checks the MirrorQuad invariants; throws DegenerateError.
void validate_quad(const MirrorQuad& quad);

/// Single-marker mode: a configured rectangle centered on each hit, mirror
/// id = class_id.
std::vector<MirrorQuad> single_marker_quads(std::span<const MarkerHit> hits,
                                            double width, double height);

}  // namespace v2r
