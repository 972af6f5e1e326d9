#include "v2r/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/LU>

#include "v2r/error.hpp"

namespace v2r {
namespace {

constexpr double kDetEps = 1e-12;
constexpr double kInfinityEps = 1e-12;

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

// Hartley conditioning: centroid to the origin, mean radius sqrt(2).
Mat3 conditioning_transform(std::span<const Point2> pts) {
  double cx = 0.0;
  double cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double mean_r = 0.0;
  for (const auto& p : pts) mean_r += std::hypot(p.x - cx, p.y - cy);
  mean_r /= static_cast<double>(pts.size());
  if (!(mean_r > 0.0) || !std::isfinite(mean_r)) {
    throw DegenerateError("correspondences collapse to a single point");
  }
  const double s = std::numbers::sqrt2 / mean_r;
  Mat3 t;
  t << s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0;
  return t;
}

Point2 transform(const Mat3& t, Point2 p) {
  const Vec3 q = t * Vec3(p.x, p.y, 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

// LU with partial pivoting, factored once and reused by inverse iteration.
class PivotedLu {
 public:
  explicit PivotedLu(const Mat9& a) : lu_(a) {
    const double floor = std::max(a.cwiseAbs().maxCoeff(), 1.0) *
                         std::numeric_limits<double>::epsilon() *
                         std::numeric_limits<double>::epsilon();
    for (int i = 0; i < 9; ++i) perm_[i] = i;
    for (int k = 0; k < 9; ++k) {
      int piv = k;
      for (int r = k + 1; r < 9; ++r) {
        if (std::abs(lu_(r, k)) > std::abs(lu_(piv, k))) piv = r;
      }
      if (piv != k) {
        lu_.row(k).swap(lu_.row(piv));
        std::swap(perm_[k], perm_[piv]);
      }
      // An exactly singular pivot means the system is consistent with an
      // exact null vector; a tiny pivot makes the solve blow up along it,
      // which is what inverse iteration wants.
      if (std::abs(lu_(k, k)) < floor) lu_(k, k) = lu_(k, k) < 0.0 ? -floor : floor;
      for (int r = k + 1; r < 9; ++r) {
        const double f = lu_(r, k) / lu_(k, k);
        lu_(r, k) = f;
        for (int c = k + 1; c < 9; ++c) lu_(r, c) -= f * lu_(k, c);
      }
    }
  }

  Vec9 solve(const Vec9& b) const {
    Vec9 y;
    for (int i = 0; i < 9; ++i) {
      double acc = b(perm_[i]);
      for (int j = 0; j < i; ++j) acc -= lu_(i, j) * y(j);
      y(i) = acc;
    }
    Vec9 x;
    for (int i = 8; i >= 0; --i) {
      double acc = y(i);
      for (int j = i + 1; j < 9; ++j) acc -= lu_(i, j) * x(j);
      x(i) = acc / lu_(i, i);
    }
    return x;
  }

 private:
  Mat9 lu_;
  std::array<int, 9> perm_{};
};

// Inverse power iteration with zero shift from a vector of ones.
Vec9 smallest_eigenvector(const Mat9& a) {
  const PivotedLu lu(a);
  Vec9 x = Vec9::Ones().normalized();
  for (int iter = 0; iter < 200; ++iter) {
    Vec9 y = lu.solve(x);
    const double norm = y.norm();
    if (!std::isfinite(norm) || norm == 0.0) break;
    y /= norm;
    if (y.dot(x) < 0.0) y = -y;
    const double change = (y - x).norm();
    x = y;
    if (change < 1e-14) break;
  }
  return x;
}

void require_quad_nondegenerate(const std::array<Point2, 4>& q, const char* what) {
  double extent = 0.0;
  for (const auto& p : q) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw DegenerateError(std::string(what) + " has non-finite corners");
    }
    extent = std::max({extent, std::abs(p.x - q[0].x), std::abs(p.y - q[0].y)});
  }
  const double eps = 1e-12 * std::max(extent * extent, 1e-300);
  for (int skip = 0; skip < 4; ++skip) {
    std::array<Point2, 3> t;
    int k = 0;
    for (int i = 0; i < 4; ++i) {
      if (i != skip) t[k++] = q[i];
    }
    if (std::abs(signed_area2(t[0], t[1], t[2])) <= eps) {
      throw DegenerateError(std::string(what) + " has three collinear corners");
    }
  }
}

// Projective map from the unit square (0,0),(1,0),(1,1),(0,1) onto q.
Mat3 square_to_quad(const std::array<Point2, 4>& q) {
  const double dx1 = q[1].x - q[2].x;
  const double dx2 = q[3].x - q[2].x;
  const double dx3 = q[0].x - q[1].x + q[2].x - q[3].x;
  const double dy1 = q[1].y - q[2].y;
  const double dy2 = q[3].y - q[2].y;
  const double dy3 = q[0].y - q[1].y + q[2].y - q[3].y;
  const double den = dx1 * dy2 - dx2 * dy1;
  if (den == 0.0) throw DegenerateError("quad has parallel diagonals");
  const double g = (dx3 * dy2 - dx2 * dy3) / den;
  const double h = (dx1 * dy3 - dx3 * dy1) / den;
  Mat3 m;
  m << q[1].x - q[0].x + g * q[1].x, q[3].x - q[0].x + h * q[3].x, q[0].x,
      q[1].y - q[0].y + g * q[1].y, q[3].y - q[0].y + h * q[3].y, q[0].y,
      g, h, 1.0;
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

Mat3 normalize_homography(const Mat3& m) {
  if (std::abs(m(2, 2)) > 1e-9) return m / m(2, 2);
  const double norm = m.norm();
  if (norm == 0.0) return m;
  Mat3 out = m / norm;
  // Fix the sign so projectively equal inputs normalize identically.
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  out.cwiseAbs().maxCoeff(&r, &c);
  if (out(r, c) < 0.0) out = -out;
  return out;
}

Homography::Homography(const Mat3& m) : m_(normalize_homography(m)) {
  if (!m_.allFinite()) throw DegenerateError("homography has non-finite entries");
  if (std::abs(m_.determinant()) <= kDetEps) {
    throw DegenerateError("homography is singular");
  }
}

Homography Homography::translation(double tx, double ty) {
  Mat3 m = Mat3::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Homography Homography::from_row_major(std::span<const double, 9> e) {
  Mat3 m;
  m << e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8];
  return Homography(m);
}

std::array<double, 9> Homography::row_major() const {
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r * 3 + c] = m_(r, c);
  }
  return out;
}

Point2 apply_homography(const Homography& h, Point2 p) {
  const Mat3& m = h.matrix();
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (std::abs(w) <= kInfinityEps) {
    throw DegenerateError("point maps to infinity");
  }
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
          (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

Homography invert_homography(const Homography& h) {
  return Homography(h.matrix().inverse());
}

Homography compose(const Homography& a, const Homography& b) {
  return Homography(a.matrix() * b.matrix());
}

Homography dlt_homography(std::span<const Correspondence> pairs) {
  if (pairs.size() < 4) {
    throw InvalidArgument("need at least 4 correspondences, got " +
                          std::to_string(pairs.size()));
  }
  std::vector<Point2> src;
  std::vector<Point2> dst;
  src.reserve(pairs.size());
  dst.reserve(pairs.size());
  for (const auto& c : pairs) {
    if (!std::isfinite(c.src.x) || !std::isfinite(c.src.y) ||
        !std::isfinite(c.dst.x) || !std::isfinite(c.dst.y)) {
      throw InvalidArgument("correspondence has non-finite coordinates");
    }
    src.push_back(c.src);
    dst.push_back(c.dst);
  }
  const Mat3 t_src = conditioning_transform(src);
  const Mat3 t_dst = conditioning_transform(dst);
  for (auto& p : src) p = transform(t_src, p);
  for (auto& p : dst) p = transform(t_dst, p);

  if (pairs.size() == 4) {
    for (const auto* pts : {&src, &dst}) {
      const auto& q = *pts;
      for (int skip = 0; skip < 4; ++skip) {
        std::array<Point2, 3> t;
        int k = 0;
        for (int i = 0; i < 4; ++i) {
          if (i != skip) t[k++] = q[i];
        }
        if (std::abs(signed_area2(t[0], t[1], t[2])) < 1e-9) {
          throw DegenerateError("three of the four correspondences are collinear");
        }
      }
    }
  }

  Mat9 normal = Mat9::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double x = src[i].x;
    const double y = src[i].y;
    const double u = dst[i].x;
    const double v = dst[i].y;
    Vec9 r1;
    r1 << -x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u;
    Vec9 r2;
    r2 << 0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v;
    normal.noalias() += r1 * r1.transpose();
    normal.noalias() += r2 * r2.transpose();
  }

  const Vec9 h = smallest_eigenvector(normal);
  const double lambda1 = h.dot(normal * h);

  // Deflate the found direction to get the second-smallest eigenvalue.
  const double trace = normal.trace();
  const Mat9 deflated = normal + trace * h * h.transpose();
  const Vec9 h2 = smallest_eigenvector(deflated);
  const double lambda2 = h2.dot(normal * h2);
  if (!(lambda2 > 1e-12 * trace) || lambda1 / lambda2 > 0.99) {
    throw DegenerateError("correspondences do not determine a unique homography");
  }

  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(t_dst.inverse() * hn * t_src);
}

Homography quad_to_quad(const std::array<Point2, 4>& src,
                        const std::array<Point2, 4>& dst) {
  require_quad_nondegenerate(src, "source quad");
  require_quad_nondegenerate(dst, "destination quad");
  const Mat3 a = square_to_quad(src);
  const Mat3 b = square_to_quad(dst);
  return Homography(b * a.inverse());
}

// ---------------------------------------------------------------------------

Plane3 Plane3::from(const Vec3& normal, double offset) {
  const double len = normal.norm();
  if (!(len > 0.0) || !std::isfinite(len)) {
    throw InvalidArgument("plane normal must be nonzero");
  }
  return Plane3{normal / len, offset / len};
}

Mat3 CameraPose::make_intrinsics(double fx, double fy, double cx, double cy) {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw InvalidArgument("focal lengths must be positive");
  }
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Point2 CameraPose::project(const Vec3& world) const {
  const Vec3 x = intrinsics * (rotation * (world - center));
  if (std::abs(x.z()) <= kInfinityEps) {
    throw DegenerateError("point projects at infinity");
  }
  return {x.x() / x.z(), x.y() / x.z()};
}

Vec3 reflect_point(const Plane3& plane, const Vec3& p) {
  return p - 2.0 * plane.signed_distance(p) * plane.n;
}

CameraPose reflect_camera(const CameraPose& cam, const Plane3& plane) {
  const Mat3 householder = Mat3::Identity() - 2.0 * plane.n * plane.n.transpose();
  CameraPose out = cam;
  out.center = reflect_point(plane, cam.center);
  out.rotation = cam.rotation * householder;
  out.mirrored = !cam.mirrored;
  return out;
}

Mat3 plane_to_image(const CameraPose& cam, const PlaneFrame& frame) {
  Mat3 basis;
  basis.col(0) = frame.u;
  basis.col(1) = frame.v;
  basis.col(2) = frame.origin - cam.center;
  return cam.intrinsics * cam.rotation * basis;
}

MirrorView mirror_view_homography(const CameraPose& cam, const Plane3& mirror,
                                  const PlaneFrame& frame) {
  if (std::abs(mirror.signed_distance(cam.center)) <= 1e-9) {
    throw InvalidArgument("camera center lies on the mirror plane");
  }
  const CameraPose virtual_cam = reflect_camera(cam, mirror);
  // (i) virtual image -> (ii) mirror-plane frame -> (iii) real image.
  const Mat3 virtual_from_plane = plane_to_image(virtual_cam, frame);
  const Mat3 real_from_plane = plane_to_image(cam, frame);
  const double scale = virtual_from_plane.norm();
  if (std::abs(virtual_from_plane.determinant()) <= kDetEps * scale * scale * scale) {
    throw DegenerateError("mirror plane is seen edge-on");
  }
  return {Homography(real_from_plane * virtual_from_plane.inverse()),
          virtual_cam.mirrored};
}

// ---------------------------------------------------------------------------

Homography scale_about(Point2 anchor, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw InvalidArgument("scale must be positive");
  }
  Mat3 z;
  z << s, 0.0, anchor.x * (1.0 - s), 0.0, s, anchor.y * (1.0 - s), 0.0, 0.0, 1.0;
  return Homography(z);
}

Homography scaled_homography(const Homography& base, Point2 anchor, double s) {
  if (s == 1.0) return base;
  return compose(base, scale_about(anchor, s));
}

double signed_area2(Point2 a, Point2 b, Point2 c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

bool polygon_contains(std::span<const Point2> poly, Point2 p) {
  // Winding number; points on an edge count as inside.
  int winding = 0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = poly[i];
    const Point2 b = poly[(i + 1) % n];
    const double cross = signed_area2(a, b, p);
    const bool within_x = std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x);
    const bool within_y = std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
    if (cross == 0.0 && within_x && within_y) return true;
    if (a.y <= p.y) {
      if (b.y > p.y && cross > 0.0) ++winding;
    } else if (b.y <= p.y && cross < 0.0) {
      --winding;
    }
  }
  return winding != 0;
}

std::array<Point2, 4> shrink_quad(const std::array<Point2, 4>& quad, double margin) {
  Point2 g{};
  for (const auto& p : quad) g = g + 0.25 * p;
  std::array<Point2, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = g + (1.0 - margin) * (quad[i] - g);
  return out;
}

bool subject_fits(const Homography& base, Point2 anchor, const Box& subject,
                  const std::array<Point2, 4>& shrunk_quad, double s) {
  const Homography hs = scaled_homography(base, anchor, s);
  for (const auto& c : subject.corners()) {
    const Mat3& m = hs.matrix();
    const double w = m(2, 0) * c.x + m(2, 1) * c.y + m(2, 2);
    if (!(w > kInfinityEps)) return false;  // behind the line at infinity
    const Point2 q{(m(0, 0) * c.x + m(0, 1) * c.y + m(0, 2)) / w,
                   (m(1, 0) * c.x + m(1, 1) * c.y + m(1, 2)) / w};
    if (!polygon_contains(shrunk_quad, q)) return false;
  }
  return true;
}

ScaleResult resolve_scale(const Homography& base, Point2 anchor,
                          const Box& subject, const std::array<Point2, 4>& quad,
                          double margin, ScaleBounds bounds) {
  if (!(subject.width() > 0.0) || !(subject.height() > 0.0)) {
    throw InvalidArgument("subject box is empty");
  }
  if (!(margin >= 0.0 && margin < 0.5)) {
    throw InvalidArgument("margin must lie in [0, 0.5)");
  }
  if (!(bounds.s_min > 0.0) || !(bounds.s_max >= bounds.s_min)) {
    throw InvalidArgument("scale bounds must satisfy 0 < s_min <= s_max");
  }
  require_quad_nondegenerate(quad, "mirror quad");
  const auto target = shrink_quad(quad, margin);

  if (subject_fits(base, anchor, subject, target, bounds.s_max)) {
    return {bounds.s_max, false};
  }
  if (!subject_fits(base, anchor, subject, target, bounds.s_min)) {
    return {bounds.s_min, true};
  }
  double lo = bounds.s_min;
  double hi = bounds.s_max;
  while ((hi - lo) > 1e-4 * lo) {
    const double mid = 0.5 * (lo + hi);
    if (subject_fits(base, anchor, subject, target, mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo, false};
}

Crop crop_field_angle(const Image& img, double fov_deg, double focal_px) {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
    throw InvalidArgument("field angle must lie in (0, 180) degrees");
  }
  if (!(focal_px > 0.0) || !std::isfinite(focal_px)) {
    throw InvalidArgument("focal length must be positive");
  }
  const int w = img.width();
  const int h = img.height();
  const double half = 0.5 * fov_deg * std::numbers::pi / 180.0;
  const double want = 2.0 * focal_px * std::tan(half);
  const int cw = std::clamp(static_cast<int>(std::lround(want)), 1, w);
  const int ch = std::clamp(
      static_cast<int>(std::lround(static_cast<double>(cw) * h / w)), 1, h);
  Crop out;
  out.offset_x = (w - cw) / 2;
  out.offset_y = (h - ch) / 2;
  if (cw == w && ch == h) {
    out.image = img;
    return out;
  }
  out.image = Image(cw, ch, img.channels());
  const std::size_t row_len = static_cast<std::size_t>(cw) * img.channels();
  for (int y = 0; y < ch; ++y) {
    const float* src = img.row(y + out.offset_y) + out.offset_x * img.channels();
    std::copy(src, src + row_len, out.image.row(y));
  }
  return out;
}

std::string format_homography(const Homography& h) {
  std::string out;
  char buf[32];
  const auto e = h.row_major();
  for (int i = 0; i < 9; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", e[i]);
    out += buf;
    out += (i % 3 == 2) ? '\n' : ' ';
  }
  return out;
}

Homography parse_homography(const std::string& text) {
  std::istringstream in(text);
  std::array<double, 9> e{};
  for (int i = 0; i < 9; ++i) {
    if (!(in >> e[i])) {
      in.clear();
      const auto where = in.tellg();
      const auto pos = where < 0 ? text.size() : static_cast<std::size_t>(where);
      throw ParseError("homography needs 9 numbers, read " + std::to_string(i), pos);
    }
  }
  std::string extra;
  if (in >> extra) {
    throw ParseError("unexpected trailing token '" + extra + "' in homography",
                     static_cast<std::size_t>(in.tellg()) - extra.size());
  }
  return Homography::from_row_major(e);
}

}  // namespace v2r
