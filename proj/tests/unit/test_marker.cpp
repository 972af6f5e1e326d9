#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "v2r/error.hpp"
#include "v2r/marker.hpp"
#include "v2r/synth.hpp"

using namespace v2r;

namespace {

void add_noise(Image& img, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  for (float& v : img.data()) v = static_cast<float>(std::clamp(v + sigma * rng.normal(), 0.0, 1.0));
}

// Antialiased filled disk, white on black.
void paint_disk(Image& img, double cx, double cy, double r) {
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      int in = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx)
          in += std::hypot(x + (sx + 0.5) / 4 - 0.5 - cx, y + (sy + 0.5) / 4 - 0.5 - cy) <= r;
      img.at(x, y) = std::max(img.at(x, y), in / 16.0f);
    }
  }
}

}  // namespace

TEST_CASE("render_marker phases") {
  const Image a = render_marker(31, 0).image;
  const Image b = render_marker(31, 1).image;
  // Deep inside each quadrant, clear of the rim and band radii.
  CHECK(a.at(10, 10) == 0.0f);   // TL black
  CHECK(a.at(20, 20) == 0.0f);   // BR black
  CHECK(a.at(20, 10) == 1.0f);   // TR white
  CHECK(a.at(10, 20) == 1.0f);   // BL white
  for (auto [x, y] : {std::pair{10, 10}, {20, 20}, {20, 10}, {10, 20}, {0, 0}}) {
    CHECK(a.at(x, y) + b.at(x, y) == doctest::Approx(1.0f));
  }
  CHECK(a.at(0, 0) == 0.5f);
  // Saddle at the center: diagonal neighbors agree, adjacent quadrants differ.
  CHECK(a.at(14, 14) == a.at(16, 16));
  CHECK(a.at(16, 14) == a.at(14, 16));
  CHECK(a.at(14, 14) != a.at(16, 14));
  CHECK(render_marker(31, 5).image == render_marker(31, 5).image);
  CHECK_THROWS_AS(render_marker(30, 0), InvalidArgument);
  CHECK_THROWS_AS(render_marker(13, 0), InvalidArgument);
  CHECK_THROWS_AS(render_marker(31, kMaxMarkerClasses), InvalidArgument);
}

TEST_CASE("ncc_score_map") {
  const MarkerTemplate tpl = render_marker(15, 0);
  Image field = oracle::random_image(64, 48, 1, 2);
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 15; ++x) field.at(20 + x, 10 + y) = tpl.image.at(x, y);
  const ScoreMap m = ncc_score_map(field, tpl);
  CHECK(m.at(27, 17) == doctest::Approx(1.0).epsilon(1e-6));

  Image inv = field;
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 15; ++x) inv.at(20 + x, 10 + y) = 1.0f - tpl.image.at(x, y);
  CHECK(ncc_score_map(inv, tpl).at(27, 17) == doctest::Approx(-1.0).epsilon(1e-6));

  const Image img = oracle::random_image(64, 64, 1, 77);
  const MarkerTemplate rt{0, 0, oracle::random_image(15, 15, 1, 78)};
  const ScoreMap s = ncc_score_map(img, rt);
  const ValidRegion vr = ncc_valid_region(64, 64, 15);
  for (int y = vr.y0; y <= vr.y1; ++y) {
    for (int x = vr.x0; x <= vr.x1; ++x) {
      CHECK(std::abs(s.at(x, y) - oracle::ncc_at(img, rt.image, x, y)) < 1e-6);
    }
  }
  for (double v : s.values()) CHECK((v >= -1.0 && v <= 1.0));

  Image flat(40, 40, 1, 0.3f);
  for (double v : oracle::values(ncc_score_map(flat, tpl))) CHECK(v == 0.0);
  CHECK_THROWS_AS(ncc_score_map(Image(10, 10, 1), tpl), InvalidArgument);
}

TEST_CASE("ncc self-correlation and classify") {
  const auto bank = make_template_bank(31, 2);
  const Classification c0 = classify_marker(bank[0].image, bank);
  CHECK(c0.class_id == 0);
  CHECK(c0.score == doctest::Approx(1.0).epsilon(1e-9));

  const std::vector<MarkerTemplate> two(bank.begin(), bank.begin() + 2);
  const Classification c1 = classify_marker(bank[1].image, two);
  CHECK(c1.class_id == 1);
  CHECK(c1.score == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ncc(bank[1].image, bank[0].image) == doctest::Approx(-1.0).epsilon(1e-9));

  int wins = 0;
  for (int t = 0; t < 100; ++t) {
    Image p = bank[0].image;
    Rng rng(1000 + t);
    for (float& v : p.data()) v = static_cast<float>(v + 0.05 * rng.normal());
    const Classification c = classify_marker(p, bank);
    wins += c.class_id == 0;
    Image low = p;
    for (float& v : low.data()) v = 0.5f + 0.3f * (v - 0.5f);
    CHECK(classify_marker(low, bank).class_id == c.class_id);
  }
  CHECK(wins >= 99);
  CHECK_THROWS_AS(classify_marker(bank[0].image, std::span<const MarkerTemplate>{}), InvalidArgument);
}

TEST_CASE("harris_response") {
  for (double v : oracle::values(harris_response(Image(20, 20, 1, 0.4f), 1.5, 0.05))) CHECK(v == 0.0);

  const Image m = render_marker(31, 0).image;
  const ScoreMap r = harris_response(m, 1.5, 0.05);
  int bx = 0, by = 0;
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x)
      if (r.at(x, y) > r.at(bx, by)) bx = x, by = y;
  CHECK(std::hypot(bx - 15, by - 15) <= 1.0);

  const Image img = oracle::random_image(24, 20, 1, 31);
  Image shifted = img;
  for (float& v : shifted.data()) v = v * 0.5f + 0.25f;
  Image half = img;
  for (float& v : half.data()) v *= 0.5f;
  const ScoreMap a = harris_response(half, 1.0, 0.04);
  const ScoreMap b = harris_response(shifted, 1.0, 0.04);
  for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-9);

  // 90-degree rotation: (x, y) -> (h-1-y, x).
  Image rot(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) rot.at(img.height() - 1 - y, x) = img.at(x, y);
  const ScoreMap ra = harris_response(img, 1.0, 0.04);
  const ScoreMap rr = harris_response(rot, 1.0, 0.04);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) CHECK(std::abs(rr.at(img.height() - 1 - y, x) - ra.at(x, y)) < 1e-9);

  CHECK_THROWS_AS(harris_response(img, 0.0, 0.05), InvalidArgument);
  CHECK_THROWS_AS(harris_response(img, 1.0, 0.25), InvalidArgument);
  CHECK_THROWS_AS(harris_response(img, 1.0, 0.0), InvalidArgument);
}

TEST_CASE("edge_map") {
  for (double v : oracle::values(edge_map(Image(10, 10, 1, 0.2f), 0.01))) CHECK(v == 0.0);

  Image step(16, 10, 1);
  for (int y = 0; y < 10; ++y)
    for (int x = 8; x < 16; ++x) step.at(x, y) = 1.0f;
  const ScoreMap e = edge_map(step, 0.1);
  int count = 0;
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (e.at(x, y) != 0.0) {
        ++count;
        CHECK(std::abs(x - 7.5) <= 1.5);
      }
    }
  }
  CHECK(count > 0);

  // Marker: circle boundary and both diameters.
  Image card(51, 51, 1, 0.5f);
  paint_marker(card, {25.0, 25.0}, 31, 0);
  const ScoreMap me = edge_map(card, 0.04);
  auto near_edge = [&](int x, int y) {
    for (int j = -1; j <= 1; ++j)
      for (int i = -1; i <= 1; ++i)
        if (me.at(x + i, y + j) != 0.0) return true;
    return false;
  };
  int total = 0, hit = 0;
  for (int y = 1; y < 50; ++y) {
    for (int x = 1; x < 50; ++x) {
      const double r = std::hypot(x - 25.0, y - 25.0);
      const bool on_circle = std::abs(r - 15.5) < 0.5;
      const bool on_diam = (x == 25 || y == 25) && r < 14.0 && r > 2.0;
      if (!on_circle && !on_diam) continue;
      ++total;
      hit += near_edge(x, y);
    }
  }
  CHECK(hit >= 0.9 * total);
}

TEST_CASE("hough_circles") {
  Image img(128, 128, 1);
  paint_disk(img, 50.0, 50.0, 20.0);
  const Gradients g = sobel_gradients(img);
  const auto circles = hough_circles(edge_map(g, 0.05), g, 15, 25, 0.25);
  REQUIRE_FALSE(circles.empty());
  CHECK(std::hypot(circles[0].cx - 50.0, circles[0].cy - 50.0) <= 2.0);
  CHECK(std::abs(circles[0].r - 20) <= 1);

  CHECK(hough_circles(ScoreMap(64, 64), sobel_gradients(Image(64, 64, 1)), 5, 10, 0.25).empty());

  Image two(160, 100, 1);
  paint_disk(two, 40.0, 50.0, 14.0);
  paint_disk(two, 115.0, 50.0, 22.0);
  const Gradients g2 = sobel_gradients(two);
  const auto cs = hough_circles(edge_map(g2, 0.05), g2, 10, 26, 0.25);
  auto found = [&](double x, double y, int r) {
    return std::any_of(cs.begin(), cs.end(), [&](const Circle& c) {
      return std::hypot(c.cx - x, c.cy - y) <= 2.0 && std::abs(c.r - r) <= 1;
    });
  };
  CHECK(found(40, 50, 14));
  CHECK(found(115, 50, 22));
  for (std::size_t i = 1; i < cs.size(); ++i) CHECK(cs[i - 1].votes >= cs[i].votes);
  REQUIRE_FALSE(cs.empty());
  CHECK(std::hypot(cs[0].cx - 115, cs[0].cy - 50) <= 2.0);

  CHECK_THROWS_AS(hough_circles(ScoreMap(8, 8), sobel_gradients(Image(8, 8, 1)), 1, 5, 0.2), InvalidArgument);
  CHECK_THROWS_AS(hough_circles(ScoreMap(8, 8), sobel_gradients(Image(8, 8, 1)), 6, 5, 0.2), InvalidArgument);
}

TEST_CASE("detect_markers on a painted scene") {
  const std::array<Point2, 4> truth = {Point2{40.3, 35.7}, Point2{160.6, 38.2}, Point2{158.1, 120.4},
                                       Point2{42.8, 118.9}};
  Image scene(200, 160, 3, 0.5f);
  for (int c = 0; c < 4; ++c) paint_marker(scene, truth[c], 31, c);
  add_noise(scene, 0.01, 4);
  const auto bank = make_template_bank(31, 1);
  DetectParams p;
  for (bool pyramid : {true, false}) {
    p.pyramid = pyramid;
    const auto hits = detect_markers(scene, bank, p);
    REQUIRE(hits.size() == 4);
    for (const auto& h : hits) {
      REQUIRE((h.class_id >= 0 && h.class_id < 4));
      CHECK(oracle::dist(h.center, truth[h.class_id]) <= 2.0);
      CHECK((h.score >= -1.0 && h.score <= 1.0));
      CHECK(h.radius > 0.0);
    }
  }
  CHECK(detect_markers(Image(200, 160, 3, 0.5f), bank, DetectParams{}).empty());
  p.ncc_thresh = 1.01;
  CHECK(detect_markers(scene, bank, p).empty());
}

TEST_CASE("pyramid and full-resolution detection agree") {
  SceneParams sp;
  sp.seed = 5;
  sp.noise_sigma = 0.02;
  sp.blur_sigma = 1.0;
  sp.motion = MotionPreset::Dual;
  const SceneGenerator gen(sp);
  const auto bank = make_template_bank(31, 2);
  DetectParams full;
  full.mirrors = 2;
  full.pyramid = false;
  DetectParams fast = full;
  fast.pyramid = true;
  for (int k : {0, 3, 7}) {
    const Image f = gen.frame(k);
    auto a = detect_markers(f, bank, full);
    auto b = detect_markers(f, bank, fast);
    auto by_class = [](const MarkerHit& l, const MarkerHit& r) { return l.class_id < r.class_id; };
    std::sort(a.begin(), a.end(), by_class);
    std::sort(b.begin(), b.end(), by_class);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].class_id == b[i].class_id);
      CHECK(oracle::dist(a[i].center, b[i].center) < 1e-6);
    }
  }
}

TEST_CASE("corners_to_quad") {
  auto hit = [](double x, double y, int cls) { return MarkerHit{{x, y}, 0.9, cls, 15.0}; };
  std::vector<MarkerHit> hits = {hit(10, 10, 0), hit(90, 10, 1), hit(90, 60, 2), hit(10, 60, 3)};
  auto a = corners_to_quad(hits);
  REQUIRE(a.quads.size() == 1);
  CHECK(a.quads[0].mirror_id == 0);
  CHECK(a.quads[0].corners[0] == Point2{10, 10});
  CHECK(a.quads[0].corners[2] == Point2{90, 60});
  CHECK(a.quads[0].signed_area() == doctest::Approx(80.0 * 50.0));

  for (int c = 0; c < 4; ++c) {
    MarkerHit h = hits[c];
    h.class_id += 4;
    h.center.x += 200;
    hits.push_back(h);
  }
  a = corners_to_quad(hits);
  REQUIRE(a.quads.size() == 2);
  CHECK(a.quads[0].mirror_id == 0);
  CHECK(a.quads[1].mirror_id == 1);

  hits.pop_back();
  a = corners_to_quad(hits);
  CHECK(a.quads.size() == 1);
  REQUIRE(a.incomplete.size() == 1);
  CHECK(a.incomplete[0] == 1);

  const std::vector<MarkerHit> line = {hit(10, 10, 0), hit(50, 10, 1), hit(90, 10, 2), hit(10, 60, 3)};
  CHECK_THROWS_AS(corners_to_quad(line), DegenerateError);
  const std::vector<MarkerHit> ccw = {hit(10, 10, 0), hit(10, 60, 1), hit(90, 60, 2), hit(90, 10, 3)};
  CHECK_THROWS_AS(corners_to_quad(ccw), DegenerateError);

  const auto sq = single_marker_quads(std::vector<MarkerHit>{hit(100, 80, 2)}, 120, 90);
  REQUIRE(sq.size() == 1);
  CHECK(sq[0].mirror_id == 2);
  CHECK(sq[0].corners[0] == Point2{40, 35});
  CHECK(sq[0].corners[2] == Point2{160, 125});
}
