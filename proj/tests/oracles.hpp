// Slow, obviously-correct reference implementations shared by the unit and
// acceptance suites. None of these call into the library's numeric kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "v2r/geometry.hpp"
#include "v2r/image.hpp"
#include "v2r/synth.hpp"

namespace oracle {

using v2r::Image;
using v2r::Point2;

// Owning copies, safe to iterate when the source is a temporary.
inline std::vector<float> pixels(const Image& img) { return {img.data().begin(), img.data().end()}; }
inline std::vector<double> values(const v2r::ScoreMap& m) { return {m.values().begin(), m.values().end()}; }

inline Image random_image(int w, int h, int ch, std::uint64_t seed) {
  v2r::Rng rng(seed);
  Image img(w, h, ch);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

inline float clamped(const Image& img, int x, int y, int c = 0) {
  return img.at(std::clamp(x, 0, img.width() - 1), std::clamp(y, 0, img.height() - 1), c);
}

/// Dense 2-D Gaussian straight from the formula, normalized over the square.
inline std::vector<double> gaussian_2d(double sigma, int& radius) {
  radius = static_cast<int>(std::ceil(3.0 * sigma));
  const int side = 2 * radius + 1;
  std::vector<double> k(side * side);
  double total = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    for (int i = -radius; i <= radius; ++i) {
      const double v = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
      k[(j + radius) * side + (i + radius)] = v;
      total += v;
    }
  }
  for (double& v : k) v /= total;
  return k;
}

/// out(x,y) = sum k(i,j) img(x-i, y-j), clamp-to-edge, any channel count.
inline std::vector<double> dense_convolve(const Image& img, const std::vector<double>& k, int radius) {
  const int side = 2 * radius + 1;
  std::vector<double> out(img.data().size());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j) {
          for (int i = -radius; i <= radius; ++i) {
            acc += k[(j + radius) * side + (i + radius)] * clamped(img, x - i, y - j, c);
          }
        }
        out[(static_cast<std::size_t>(y) * img.width() + x) * img.channels() + c] = acc;
      }
    }
  }
  return out;
}

inline float median_by_sort(const Image& img, int x, int y, int c, int r) {
  std::vector<float> w;
  for (int j = -r; j <= r; ++j) {
    for (int i = -r; i <= r; ++i) w.push_back(clamped(img, x + i, y + j, c));
  }
  std::sort(w.begin(), w.end());
  return w[w.size() / 2];
}

/// Zero-mean NCC of the template against the window centered at (cx,cy),
/// using explicit mean/variance loops. Flat windows score 0.
inline double ncc_at(const Image& img, const Image& tpl, int cx, int cy) {
  const int s = tpl.width();
  const int h = s / 2;
  const double n = double(s) * s;
  double mi = 0.0, mt = 0.0;
  for (int j = 0; j < s; ++j) {
    for (int i = 0; i < s; ++i) {
      mi += img.at(cx - h + i, cy - h + j);
      mt += tpl.at(i, j);
    }
  }
  mi /= n;
  mt /= n;
  double num = 0.0, vi = 0.0, vt = 0.0;
  for (int j = 0; j < s; ++j) {
    for (int i = 0; i < s; ++i) {
      const double a = img.at(cx - h + i, cy - h + j) - mi;
      const double b = tpl.at(i, j) - mt;
      num += a * b;
      vi += a * a;
      vt += b * b;
    }
  }
  if (vi / n < 1e-8) return 0.0;
  return num / std::sqrt(vi * vt);
}

inline double loop_sum(const Image& img, int x0, int y0, int x1, int y1, bool squared) {
  double acc = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double v = img.at(x, y);
      acc += squared ? v * v : v;
    }
  }
  return acc;
}

/// Homogeneous multiply-then-divide.
inline Point2 project(const Eigen::Matrix3d& m, Point2 p) {
  const Eigen::Vector3d q = m * Eigen::Vector3d(p.x, p.y, 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

/// Random homography with 2-norm condition number <= max_cond (after
/// normalizing h33 = 1), mild perspective, acting on a ~[0,100]^2 domain.
inline Eigen::Matrix3d random_homography(v2r::Rng& rng, double max_cond = 100.0) {
  for (;;) {
    Eigen::Matrix3d m;
    m << rng.uniform(0.5, 1.5), rng.uniform(-0.4, 0.4), rng.uniform(-20, 20),
        rng.uniform(-0.4, 0.4), rng.uniform(0.5, 1.5), rng.uniform(-20, 20),
        rng.uniform(-1e-3, 1e-3), rng.uniform(-1e-3, 1e-3), 1.0;
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m);
    const auto sv = svd.singularValues();
    if (sv(2) > 0.0 && sv(0) / sv(2) <= max_cond) return m;
  }
}

inline double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Point-in-convex-polygon by edge sign (clockwise on screen: all >= 0).
inline bool inside_convex(const std::array<Point2, 4>& q, Point2 p) {
  for (int i = 0; i < 4; ++i) {
    const Point2 a = q[i];
    const Point2 b = q[(i + 1) % 4];
    if ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) < -1e-12) return false;
  }
  return true;
}

/// Largest s on a uniform grid of `steps` points in [lo, hi] for which all
/// scaled box corners land inside the quad shrunk about its centroid.
inline double grid_scale(const Eigen::Matrix3d& base, Point2 anchor, const v2r::Box& box,
                         const std::array<Point2, 4>& quad, double margin, double lo, double hi,
                         int steps) {
  Point2 c{0, 0};
  for (const auto& p : quad) c = {c.x + p.x / 4, c.y + p.y / 4};
  std::array<Point2, 4> shrunk;
  for (int i = 0; i < 4; ++i) {
    shrunk[i] = {c.x + (1 - margin) * (quad[i].x - c.x), c.y + (1 - margin) * (quad[i].y - c.y)};
  }
  const std::array<Point2, 4> corners = {Point2{box.x0, box.y0}, Point2{box.x1, box.y0},
                                         Point2{box.x1, box.y1}, Point2{box.x0, box.y1}};
  double best = -1.0;
  for (int k = 0; k < steps; ++k) {
    const double s = lo + (hi - lo) * k / (steps - 1);
    bool ok = true;
    for (const auto& p : corners) {
      const Point2 z{anchor.x + s * (p.x - anchor.x), anchor.y + s * (p.y - anchor.y)};
      if (!inside_convex(shrunk, project(base, z))) {
        ok = false;
        break;
      }
    }
    if (ok) best = s;
  }
  return best;
}

struct MirrorSetup {
  v2r::CameraPose cam;
  v2r::Plane3 plane;
  v2r::PlaneFrame frame;
};

/// Camera facing a tilted plane 2..6 units ahead; frame origin on its axis.
inline MirrorSetup random_mirror_setup(v2r::Rng& rng) {
  using v2r::Vec3;
  MirrorSetup m;
  m.cam.center = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
  const Vec3 axis = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
  m.cam.rotation = Eigen::AngleAxisd(rng.uniform(-3, 3), axis).toRotationMatrix();
  m.cam.intrinsics = v2r::CameraPose::make_intrinsics(rng.uniform(300, 900), rng.uniform(300, 900), 320, 240);
  const Vec3 look = m.cam.rotation.transpose() * Vec3::UnitZ();
  const Vec3 origin = m.cam.center + rng.uniform(2, 6) * look;
  const Vec3 tilt(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
  const Vec3 n = (-look + tilt).normalized();
  m.plane = v2r::Plane3::from(n, -n.dot(origin));
  m.frame.origin = origin;
  m.frame.u = n.unitOrthogonal();
  m.frame.v = n.cross(m.frame.u);
  return m;
}

/// Pixel of world point q in the real camera and in its mirror image,
/// reflecting by hand: c' = c - 2(n.c + d)n, R' = R (I - 2nn^T).
inline std::pair<Point2, Point2> real_and_virtual(const MirrorSetup& m, const Eigen::Vector3d& q) {
  const Eigen::Vector3d n = m.plane.n;
  const Eigen::Vector3d vc = m.cam.center - 2.0 * (n.dot(m.cam.center) + m.plane.d) * n;
  const Eigen::Matrix3d vr = m.cam.rotation * (Eigen::Matrix3d::Identity() - 2.0 * n * n.transpose());
  const Eigen::Vector3d xr = m.cam.intrinsics * m.cam.rotation * (q - m.cam.center);
  const Eigen::Vector3d xv = m.cam.intrinsics * vr * (q - vc);
  return {{xr.x() / xr.z(), xr.y() / xr.z()}, {xv.x() / xv.z(), xv.y() / xv.z()}};
}

}  // namespace oracle
