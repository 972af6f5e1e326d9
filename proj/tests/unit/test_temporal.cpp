#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "v2r/error.hpp"
#include "v2r/temporal.hpp"

using namespace v2r;

namespace {

MirrorQuad make_quad(const std::array<Point2, 4>& c, int id = 0) {
  MirrorQuad q;
  q.mirror_id = id;
  q.corners = c;
  return q;
}

double inf_norm(const Mat3& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("smooth_homography") {
  Rng rng(1);
  const Homography a(oracle::random_homography(rng));
  const Homography b(oracle::random_homography(rng));
  CHECK(smooth_homography(a, a, 0.3) == a);
  CHECK(smooth_homography(a, b, 1.0) == b);

  Homography cur = a;
  const double start = inf_norm(a.matrix() - b.matrix());
  for (int k = 1; k <= 20; ++k) {
    cur = smooth_homography(cur, b, 0.3);
    CHECK(inf_norm(cur.matrix() - b.matrix()) <= std::pow(0.7, k) * start + 1e-12);
    CHECK(cur.matrix()(2, 2) == doctest::Approx(1.0));
  }

  // Opposite handedness: the midpoint blend is singular.
  Mat3 p = Mat3::Identity();
  Mat3 q = Mat3::Identity();
  q(0, 0) = -1.0;
  CHECK(smooth_homography(Homography(p), Homography(q), 0.5) == Homography(q));

  CHECK_THROWS_AS(smooth_homography(a, b, 0.0), InvalidArgument);
  CHECK_THROWS_AS(smooth_homography(a, b, 1.5), InvalidArgument);
}

TEST_CASE("update_track seeding and hold") {
  const std::array<Point2, 4> rect = {Point2{0, 0}, Point2{99, 0}, Point2{99, 79}, Point2{0, 79}};
  const MirrorQuad q = make_quad({Point2{10, 12}, Point2{200, 15}, Point2{190, 160}, Point2{14, 150}});
  const Homography h = quad_to_quad(rect, q.corners);
  const TrackParams tp{0.3, 15};
  TrackState st;
  st = update_track(st, q, h, 1.7, tp);
  CHECK(st.alive);
  CHECK(st.seeded);
  CHECK(st.smoothed_h == h);
  CHECK(st.smoothed_s == 1.7);
  CHECK(st.frames_since_seen == 0);

  for (int k = 1; k <= 15; ++k) {
    st = update_track(st, std::nullopt, std::nullopt, std::nullopt, tp);
    CHECK(st.alive);
    CHECK(st.frames_since_seen == k);
    CHECK(st.smoothed_h == h);
  }
  st = update_track(st, std::nullopt, std::nullopt, std::nullopt, tp);
  CHECK_FALSE(st.alive);

  // Re-detection after death seeds afresh.
  const Homography h2 = Homography::translation(3, 4);
  st = update_track(st, q, h2, 0.9, tp);
  CHECK(st.alive);
  CHECK(st.smoothed_h == h2);
  CHECK(st.smoothed_s == 0.9);
}

TEST_CASE("update_track smooths jitter") {
  const std::array<Point2, 4> rect = {Point2{0, 0}, Point2{319, 0}, Point2{319, 239}, Point2{0, 239}};
  const std::array<Point2, 4> truth = {Point2{100, 80}, Point2{400, 90}, Point2{390, 330}, Point2{110, 320}};
  Rng rng(2);
  TrackState st;
  const TrackParams tp{0.3, 15};
  std::vector<double> raw, smooth;
  for (int f = 0; f < 400; ++f) {
    auto c = truth;
    for (auto& p : c) p = {p.x + rng.uniform(-2, 2), p.y + rng.uniform(-2, 2)};
    st = update_track(st, make_quad(c), quad_to_quad(rect, c), 1.0, tp);
    if (f < 20) continue;
    raw.push_back(c[0].x);
    smooth.push_back(apply_homography(st.smoothed_h, rect[0]).x);
  }
  auto var = [](const std::vector<double>& v) {
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    return s / v.size();
  };
  CHECK(var(raw) >= 3.0 * var(smooth));
}

TEST_CASE("estimate_subject_bbox") {
  const Image bg(120, 100, 3, 0.2f);
  CHECK_FALSE(estimate_subject_bbox(bg, bg, 0.1, 100));

  auto insert = [&](int x0, int y0, int w, int h) {
    Image f = bg;
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x)
        for (int c = 0; c < 3; ++c) f.at(x, y, c) = 0.9f;
    return f;
  };
  const auto sb = estimate_subject_bbox(insert(30, 20, 40, 40), bg, 0.1, 100);
  REQUIRE(sb);
  CHECK(std::abs(sb->box.x0 - 29.5) <= 1.0);
  CHECK(std::abs(sb->box.y0 - 19.5) <= 1.0);
  CHECK(std::abs(sb->box.x1 - 69.5) <= 1.0);
  CHECK(std::abs(sb->box.y1 - 59.5) <= 1.0);
  CHECK(sb->confidence >= 0.95);

  Image two = insert(10, 10, 30, 30);
  for (int y = 70; y < 80; ++y)
    for (int x = 90; x < 100; ++x) two.at(x, y, 0) = two.at(x, y, 1) = two.at(x, y, 2) = 0.9f;
  const auto big = estimate_subject_bbox(two, bg, 0.1, 50);
  REQUIRE(big);
  CHECK(big->box.x0 == doctest::Approx(9.5));
  CHECK(big->box.x1 == doctest::Approx(39.5));

  // Translation consistency.
  const auto moved = estimate_subject_bbox(insert(37, 25, 40, 40), bg, 0.1, 100);
  REQUIRE(moved);
  CHECK(moved->box.x0 - sb->box.x0 == doctest::Approx(7.0));
  CHECK(moved->box.y1 - sb->box.y1 == doctest::Approx(5.0));

  CHECK_FALSE(estimate_subject_bbox(insert(30, 20, 5, 5), bg, 0.1, 100));
  CHECK_THROWS_AS(estimate_subject_bbox(Image(10, 10, 3), bg, 0.1, 100), InvalidArgument);
}
