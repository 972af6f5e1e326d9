#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "v2r/image.hpp"

namespace v2r {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Nonsingular 3x3 projective transform, kept normalized: bottom-right entry
/// 1 when it is not vanishing, unit Frobenius norm otherwise.
class Homography {
 public:
  Homography() : m_(Mat3::Identity()) {}
  /// Normalizes `m`; throws DegenerateError on non-finite or singular input.
  explicit Homography(const Mat3& m);

  static Homography identity() { return Homography(); }
  static Homography translation(double tx, double ty);
  /// Row-major 9 entries.
  static Homography from_row_major(std::span<const double, 9> entries);

  const Mat3& matrix() const noexcept { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }
  std::array<double, 9> row_major() const;

  friend bool operator==(const Homography&, const Homography&) = default;

 private:
  Mat3 m_;
};

/// Normalized copy of `m` (no singularity check).
Mat3 normalize_homography(const Mat3& m);

/// Maps p through H. Throws DegenerateError when p goes to infinity.
Point2 apply_homography(const Homography& h, Point2 p);

Homography invert_homography(const Homography& h);

/// `a` after `b`: apply(compose(a,b), p) == apply(a, apply(b, p)).
Homography compose(const Homography& a, const Homography& b);

struct Correspondence {
  Point2 src;
  Point2 dst;
};

/// Normalized DLT over >= 4 correspondences (Hartley conditioning on both
/// sides; smallest eigenvector of the 9x9 normal matrix by inverse
/// iteration). Throws DegenerateError for collinear or rank-deficient
/// configurations.
Homography dlt_homography(std::span<const Correspondence> pairs);

/// Exact homography taking src[i] to dst[i] for the four corners.
Homography quad_to_quad(const std::array<Point2, 4>& src,
                        const std::array<Point2, 4>& dst);

// ---------------------------------------------------------------------------
// Mirror camera model.

/// Plane {p : n.p + d = 0}.
struct Plane3 {
  Vec3 n{0.0, 0.0, 1.0};
  double d = 0.0;

  /// Normalizes the normal and rescales d to match.
  static Plane3 from(const Vec3& normal, double offset);
  double signed_distance(const Vec3& p) const { return n.dot(p) + d; }
};

/// 2-D coordinate frame embedded in a plane: point(a,b) = origin + a*u + b*v.
struct PlaneFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
};

/// Pinhole camera: x ~ K * R * (X - center). `mirrored` marks a camera whose
/// rotation has determinant -1 (seen through a mirror).
struct CameraPose {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Mat3 intrinsics = Mat3::Identity();
  bool mirrored = false;

  static Mat3 make_intrinsics(double fx, double fy, double cx, double cy);
  /// Projects a world point to pixels. Throws DegenerateError at zero depth.
  Point2 project(const Vec3& world) const;
};

Vec3 reflect_point(const Plane3& plane, const Vec3& p);
CameraPose reflect_camera(const CameraPose& cam, const Plane3& plane);

struct MirrorView {
  /// Maps the reflected camera's image of the mirror plane onto the real
  /// camera's image of it.
  Homography h;
  /// Parity of the reflected camera; consumers apply it as a horizontal flip.
  bool mirrored = true;
};

/// Plane-induced homography between the reflected (virtual) camera and the
/// real camera, routed through the mirror's 2-D frame: real image <- plane
/// <- virtual image. Throws InvalidArgument when the camera lies on the
/// plane.
MirrorView mirror_view_homography(const CameraPose& cam, const Plane3& mirror,
                                  const PlaneFrame& frame);

/// 3x3 homography projecting mirror-frame coordinates (a,b) into `cam`.
Mat3 plane_to_image(const CameraPose& cam, const PlaneFrame& frame);

// ---------------------------------------------------------------------------
// Scale family.

/// Similarity scaling by s about `anchor`.
Homography scale_about(Point2 anchor, double s);

/// base o Z(anchor, s). The anchor maps to the same place for every s.
Homography scaled_homography(const Homography& base, Point2 anchor, double s);

/// Axis-aligned rectangle in continuous pixel coordinates.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  Point2 center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  std::array<Point2, 4> corners() const {
    return {Point2{x0, y0}, Point2{x1, y0}, Point2{x1, y1}, Point2{x0, y1}};
  }
};

struct ScaleBounds {
  double s_min = 0.25;
  double s_max = 4.0;
};

struct ScaleResult {
  double s = 1.0;
  bool out_of_sight = false;
};

/// True when `p` is inside the polygon (boundary counts as inside).
bool polygon_contains(std::span<const Point2> polygon, Point2 p);

/// Quad shrunk toward its vertex centroid by `margin` (0 leaves it intact).
std::array<Point2, 4> shrink_quad(const std::array<Point2, 4>& quad, double margin);

/// Largest s in [s_min, s_max] whose warped subject box stays inside the
/// margin-shrunk quad, found by bisection to relative tolerance 1e-4.
ScaleResult resolve_scale(const Homography& base, Point2 anchor,
                          const Box& subject, const std::array<Point2, 4>& quad,
                          double margin, ScaleBounds bounds = {});

/// Containment predicate used by resolve_scale, exposed for testing.
bool subject_fits(const Homography& base, Point2 anchor, const Box& subject,
                  const std::array<Point2, 4>& shrunk_quad, double s);

struct Crop {
  Image image;
  int offset_x = 0;
  int offset_y = 0;
};

/// Centered crop of width 2*focal*tan(fov/2) (clamped to the frame) keeping
/// the frame's aspect ratio.
Crop crop_field_angle(const Image& img, double fov_deg, double focal_px);

// ---------------------------------------------------------------------------
// Text format: 9 whitespace-separated numbers, row-major, normalized.

std::string format_homography(const Homography& h);
Homography parse_homography(const std::string& text);

/// Twice the signed area of triangle abc (positive = clockwise on screen).
double signed_area2(Point2 a, Point2 b, Point2 c);

}  // namespace v2r
