#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "v2r/error.hpp"
#include "v2r/geometry.hpp"
#include "v2r/synth.hpp"

using namespace v2r;

namespace {

Point2 rand_point(Rng& rng, double lo = 0.0, double hi = 100.0) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

double max_entry_diff(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Random convex clockwise quad around (cx, cy).
std::array<Point2, 4> random_quad(Rng& rng, double cx, double cy, double r) {
  std::array<Point2, 4> q;
  for (int i = 0; i < 4; ++i) {
    const double a = -0.75 * std::numbers::pi + i * std::numbers::pi / 2 + rng.uniform(-0.3, 0.3);
    const double rr = r * rng.uniform(0.8, 1.2);
    q[i] = {cx + rr * std::cos(a), cy + rr * std::sin(a)};
  }
  return q;
}

}  // namespace

TEST_CASE("apply_homography") {
  Rng rng(1);
  const Point2 p{3.5, -7.25};
  CHECK(apply_homography(Homography::identity(), p) == p);
  const Point2 t = apply_homography(Homography::translation(3, -2), {0, 0});
  CHECK(t.x == doctest::Approx(3.0));
  CHECK(t.y == doctest::Approx(-2.0));
  for (int i = 0; i < 50; ++i) {
    const Mat3 m = oracle::random_homography(rng);
    const Homography h(m);
    const Point2 q = rand_point(rng);
    const Point2 ref = oracle::project(m, q);
    CHECK(oracle::dist(apply_homography(h, q), ref) < 1e-12 * std::max(1.0, std::hypot(ref.x, ref.y)));
    // Projective equivalence: rescaled matrix, same mapping, same normalization.
    const Homography h2(m * -3.7);
    CHECK(oracle::dist(apply_homography(h2, q), ref) < 1e-9);
    CHECK(max_entry_diff(h2.matrix(), h.matrix()) < 1e-12);
    CHECK(Homography(h.matrix()) == h);
  }
  Mat3 inf = Mat3::Identity();
  inf(2, 0) = 1.0;
  inf(2, 2) = 0.0;
  inf(0, 2) = 1.0;
  CHECK_THROWS_AS(apply_homography(Homography(inf), {0, 0}), DegenerateError);
  CHECK_THROWS_AS(Homography(Mat3::Zero()), DegenerateError);
}

TEST_CASE("invert and compose") {
  CHECK(invert_homography(Homography::identity()) == Homography::identity());
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Homography h(oracle::random_homography(rng));
    CHECK(compose(h, Homography::identity()) == h);
    const Homography round = compose(invert_homography(h), h);
    CHECK(max_entry_diff(round.matrix(), Mat3::Identity()) <= 1e-9);
    for (int k = 0; k < 100; ++k) {
      const Point2 p = rand_point(rng);
      CHECK(oracle::dist(apply_homography(round, p), p) < 1e-9);
    }
    const Homography g(oracle::random_homography(rng));
    const Point2 p = rand_point(rng);
    CHECK(oracle::dist(apply_homography(compose(g, h), p), apply_homography(g, apply_homography(h, p))) < 1e-9);
  }
}

TEST_CASE("dlt_homography") {
  const std::array<Point2, 4> sq = {Point2{0, 0}, Point2{1, 0}, Point2{1, 1}, Point2{0, 1}};
  std::vector<Correspondence> c;
  for (const auto& p : sq) c.push_back({p, p});
  CHECK(max_entry_diff(dlt_homography(c).matrix(), Mat3::Identity()) < 1e-9);
  for (auto& cc : c) cc.dst = {cc.src.x + 5, cc.src.y + 7};
  CHECK(max_entry_diff(dlt_homography(c).matrix(), Homography::translation(5, 7).matrix()) < 1e-9);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 m = oracle::random_homography(rng);
    std::vector<Correspondence> pairs;
    for (int i = 0; i < 12; ++i) {
      const Point2 p = rand_point(rng);
      pairs.push_back({p, oracle::project(m, p)});
    }
    const Homography h = dlt_homography(pairs);
    CHECK(max_entry_diff(h.matrix(), m / m(2, 2)) < 1e-6);
    for (const auto& pr : pairs) CHECK(oracle::dist(apply_homography(h, pr.src), pr.dst) < 1e-8);
  }

  std::vector<Correspondence> line;
  for (int i = 0; i < 6; ++i) line.push_back({{double(i), 2.0 * i}, {double(i), 3.0 * i}});
  CHECK_THROWS_AS(dlt_homography(line), DegenerateError);
  CHECK_THROWS_AS(dlt_homography(std::vector<Correspondence>(c.begin(), c.begin() + 3)), InvalidArgument);
}

TEST_CASE("quad_to_quad") {
  const std::array<Point2, 4> sq = {Point2{0, 0}, Point2{1, 0}, Point2{1, 1}, Point2{0, 1}};
  CHECK(max_entry_diff(quad_to_quad(sq, sq).matrix(), Mat3::Identity()) < 1e-12);
  const std::array<Point2, 4> sq2 = {Point2{0, 0}, Point2{2, 0}, Point2{2, 2}, Point2{0, 2}};
  CHECK(max_entry_diff(quad_to_quad(sq, sq2).matrix(), Eigen::Vector3d(2, 2, 1).asDiagonal().toDenseMatrix()) <
        1e-12);

  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_quad(rng, 50, 50, 30);
    const auto b = random_quad(rng, 300, 200, 80);
    const Homography h = quad_to_quad(a, b);
    std::vector<Correspondence> pairs;
    for (int i = 0; i < 4; ++i) {
      CHECK(oracle::dist(apply_homography(h, a[i]), b[i]) < 1e-9);
      pairs.push_back({a[i], b[i]});
    }
    CHECK(max_entry_diff(dlt_homography(pairs).matrix(), h.matrix()) < 1e-6);
  }
  const std::array<Point2, 4> bad = {Point2{0, 0}, Point2{1, 0}, Point2{2, 0}, Point2{0, 1}};
  CHECK_THROWS_AS(quad_to_quad(bad, sq), DegenerateError);
}

TEST_CASE("reflection") {
  const Plane3 z0 = Plane3::from({0, 0, 1}, 0.0);
  const Vec3 r = reflect_point(z0, {0, 0, 1});
  CHECK((r - Vec3(0, 0, -1)).norm() < 1e-15);
  CHECK((reflect_point(z0, {3, 4, 0}) - Vec3(3, 4, 0)).norm() < 1e-15);

  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Plane3 pl = Plane3::from({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}, rng.uniform(-3, 3));
    CHECK(std::abs(pl.n.norm() - 1.0) < 1e-12);
    const Vec3 p(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    CHECK((reflect_point(pl, reflect_point(pl, p)) - p).norm() < 1e-12);

    CameraPose cam;
    cam.center = p;
    cam.rotation = Eigen::AngleAxisd(rng.uniform(-3, 3), Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 1).normalized())
                       .toRotationMatrix();
    const CameraPose once = reflect_camera(cam, pl);
    CHECK(once.mirrored);
    CHECK(once.rotation.determinant() == doctest::Approx(-1.0));
    const CameraPose twice = reflect_camera(once, pl);
    CHECK((twice.center - cam.center).norm() < 1e-12);
    CHECK((twice.rotation - cam.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK_FALSE(twice.mirrored);
  }
}

TEST_CASE("mirror_view_homography") {
  CameraPose cam;
  cam.center = {0, 0, 5};
  // Looking down -z: flip y and z.
  cam.rotation = Vec3(1, -1, -1).asDiagonal();
  cam.intrinsics = CameraPose::make_intrinsics(500, 500, 320, 240);
  const MirrorView mv = mirror_view_homography(cam, Plane3::from({0, 0, 1}, 0.0), PlaneFrame{});
  CHECK(mv.mirrored);
  CHECK(max_entry_diff(mv.h.matrix(), Mat3::Identity()) < 1e-9);

  const Plane3 through = Plane3::from({0, 0, 1}, -5.0);
  CHECK_THROWS_AS(mirror_view_homography(cam, through, PlaneFrame{}), InvalidArgument);

  // Project-and-compare against an independent reflected pinhole.
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const auto m = oracle::random_mirror_setup(rng);
    const MirrorView view = mirror_view_homography(m.cam, m.plane, m.frame);
    for (int k = 0; k < 10; ++k) {
      const Vec3 q = m.frame.origin + rng.uniform(-1, 1) * m.frame.u + rng.uniform(-1, 1) * m.frame.v;
      const auto [real, virt] = oracle::real_and_virtual(m, q);
      CHECK(oracle::dist(apply_homography(view.h, virt), real) <= 1e-6);
    }
  }
}

TEST_CASE("scaled_homography") {
  Rng rng(7);
  const Homography base(oracle::random_homography(rng));
  const Point2 anchor{40, 30};
  CHECK(scaled_homography(base, anchor, 1.0) == base);
  const Point2 ref = apply_homography(base, anchor);
  for (int i = 0; i <= 40; ++i) {
    const double s = std::pow(10.0, -1.0 + i / 20.0);
    CHECK(oracle::dist(apply_homography(scaled_homography(base, anchor, s), anchor), ref) <= 1e-9);
  }
  const Point2 p = apply_homography(scaled_homography(Homography::identity(), {10, 10}, 2.0), {11, 10});
  CHECK(p.x == doctest::Approx(12.0));
  CHECK(p.y == doctest::Approx(10.0));
  CHECK_THROWS_AS(scaled_homography(base, anchor, 0.0), InvalidArgument);
  CHECK_THROWS_AS(scaled_homography(base, anchor, -1.0), InvalidArgument);
}

TEST_CASE("resolve_scale") {
  const std::array<Point2, 4> quad = {Point2{0, 0}, Point2{100, 0}, Point2{100, 100}, Point2{0, 100}};
  const Box small{40, 40, 60, 60};
  CHECK(resolve_scale(Homography::identity(), small.center(), small, quad, 0.0, {0.25, 1.0}).s == 1.0);

  const Box big{-50, -50, 150, 150};
  const ScaleResult half = resolve_scale(Homography::identity(), big.center(), big, quad, 0.0);
  CHECK(std::abs(half.s - 0.5) <= 1e-3);
  CHECK_FALSE(half.out_of_sight);

  const Box huge{-1000, -1000, 1100, 1100};
  const ScaleResult lost = resolve_scale(Homography::identity(), huge.center(), huge, quad, 0.0);
  CHECK(lost.out_of_sight);
  CHECK(lost.s == 0.25);

  const std::array<Point2, 4> flat = {Point2{0, 0}, Point2{50, 0}, Point2{100, 0}, Point2{0, 100}};
  CHECK_THROWS_AS(resolve_scale(Homography::identity(), small.center(), small, flat, 0.0), DegenerateError);

  Rng rng(8);
  int checked = 0;
  for (int t = 0; t < 60; ++t) {
    const auto q = random_quad(rng, 320, 240, rng.uniform(60, 150));
    const Homography base = quad_to_quad(feed_rect(320, 240), q);
    const double x0 = rng.uniform(20, 200), y0 = rng.uniform(20, 140);
    const Box b{x0, y0, x0 + rng.uniform(30, 110), y0 + rng.uniform(30, 90)};
    const double margin = rng.uniform(0.0, 0.2);
    const ScaleResult r = resolve_scale(base, b.center(), b, q, margin);
    const double grid = oracle::grid_scale(base.matrix(), b.center(), b, q, margin, 0.25, 4.0, 10000);
    if (grid < 0) {
      CHECK(r.out_of_sight);
      continue;
    }
    ++checked;
    CHECK(std::abs(r.s - grid) <= 1e-3);
    // Containment is monotone in s.
    const auto shrunk = shrink_quad(q, margin);
    bool seen_fail = false;
    for (int k = 0; k <= 200; ++k) {
      const double s = 0.25 + 3.75 * k / 200;
      const bool fits = subject_fits(base, b.center(), b, shrunk, s);
      if (!fits) seen_fail = true;
      CHECK_FALSE((fits && seen_fail));
    }
  }
  CHECK(checked >= 40);
}

TEST_CASE("crop_field_angle") {
  const Image img(1000, 800, 3, 0.5f);
  const double fov = 2.0 * std::atan(0.5) * 180.0 / std::numbers::pi;  // 53.13 degrees
  const Crop c = crop_field_angle(img, fov, 500.0);
  CHECK(c.image.width() == 500);
  CHECK(c.image.height() == 400);
  CHECK(c.offset_x == 250);
  CHECK(c.offset_y == 200);

  const Crop full = crop_field_angle(img, fov, 1000.0);
  CHECK(full.image == img);
  CHECK(full.offset_x == 0);
  CHECK(full.offset_y == 0);

  CHECK_THROWS_AS(crop_field_angle(img, 180.0, 500.0), InvalidArgument);
  CHECK_THROWS_AS(crop_field_angle(img, 0.0, 500.0), InvalidArgument);
  CHECK_THROWS_AS(crop_field_angle(img, 60.0, 0.0), InvalidArgument);
}

TEST_CASE("homography text format") {
  Rng rng(9);
  const Homography h(oracle::random_homography(rng));
  const Homography back = parse_homography(format_homography(h));
  CHECK(max_entry_diff(back.matrix(), h.matrix()) < 1e-9);
  CHECK_THROWS(parse_homography("1 0 0 0 1 0 0 0"));
  CHECK_THROWS(parse_homography("1 0 0 0 1 0 0 0 x"));
}
