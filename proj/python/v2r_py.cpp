#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "v2r/compositor.hpp"
#include "v2r/config.hpp"
#include "v2r/error.hpp"
#include "v2r/filters.hpp"
#include "v2r/geometry.hpp"
#include "v2r/marker.hpp"
#include "v2r/media.hpp"
#include "v2r/synth.hpp"

namespace py = pybind11;
using namespace v2r;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, 3) float array in [0, 1].
Image to_image(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw InvalidArgument("expected an (H, W) or (H, W, 3) array");
  const int ch = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), ch);
  std::memcpy(img.data().data(), a.data(), img.data().size() * sizeof(float));
  return img;
}

FloatArray to_array(const Image& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() != 1) shape.push_back(img.channels());
  FloatArray a(shape);
  std::memcpy(a.mutable_data(), img.data().data(), img.data().size() * sizeof(float));
  return a;
}

py::array_t<double> to_array(const ScoreMap& m) {
  py::array_t<double> a({m.height(), m.width()});
  std::memcpy(a.mutable_data(), m.values().data(), m.values().size() * sizeof(double));
  return a;
}

Point2 to_point(const std::array<double, 2>& p) { return {p[0], p[1]}; }
std::array<double, 2> from_point(Point2 p) { return {p.x, p.y}; }

std::array<Point2, 4> to_quad(const std::array<std::array<double, 2>, 4>& q) {
  return {to_point(q[0]), to_point(q[1]), to_point(q[2]), to_point(q[3])};
}

std::vector<std::array<double, 2>> from_quad(const std::array<Point2, 4>& q) {
  std::vector<std::array<double, 2>> out;
  for (const auto& p : q) out.push_back(from_point(p));
  return out;
}

py::dict hit_dict(const MarkerHit& h) {
  py::dict d;
  d["center"] = from_point(h.center);
  d["score"] = h.score;
  d["class_id"] = h.class_id;
  d["radius"] = h.radius;
  return d;
}

}  // namespace

PYBIND11_MODULE(_v2r, m) {
  m.doc() = "Mirror/window compositing: marker detection, homographies, temporal tracking";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  // Images and files.
  m.def("read_ppm", [](const std::string& path) { return to_array(read_ppm(path)); });
  m.def("write_ppm", [](const FloatArray& a, const std::string& path) { write_ppm(to_image(a), path); });
  m.def("encode_ppm", [](const FloatArray& a) { return py::bytes(encode_ppm(to_image(a))); });
  m.def("decode_ppm", [](const py::bytes& b) { return to_array(decode_ppm(std::string(b))); });
  m.def("gaussian_filter", [](const FloatArray& a, double sigma) {
    return to_array(gaussian_filter(to_image(a), sigma));
  });
  m.def("median_filter", [](const FloatArray& a, int r) { return to_array(median_filter(to_image(a), r)); });
  m.def("to_grayscale", [](const FloatArray& a) { return to_array(to_grayscale(to_image(a))); });

  // Markers.
  m.def("render_marker", [](int side, int class_id) { return to_array(render_marker(side, class_id).image); });
  m.def("ncc_score_map", [](const FloatArray& gray, const FloatArray& tpl) {
    const Image t = to_image(tpl);
    return to_array(ncc_score_map(to_image(gray), MarkerTemplate{0, 0, t}));
  });
  m.def(
      "detect_markers",
      [](const FloatArray& a, int marker_side, int mirrors, const std::string& config) {
        Config cfg = parse_config(config);
        cfg.detect.marker_side = marker_side;
        cfg.detect.mirrors = mirrors;
        py::list out;
        for (const auto& h : detect_markers(to_image(a), make_template_bank(marker_side, mirrors), cfg.detect)) {
          out.append(hit_dict(h));
        }
        return out;
      },
      py::arg("image"), py::arg("marker_side") = 31, py::arg("mirrors") = 1, py::arg("config") = "");

  // Geometry. Homographies cross the boundary as 3x3 arrays.
  m.def("dlt_homography", [](const std::vector<std::array<double, 4>>& pairs) {
    std::vector<Correspondence> c;
    for (const auto& p : pairs) c.push_back({{p[0], p[1]}, {p[2], p[3]}});
    return dlt_homography(c).matrix();
  });
  m.def("apply_homography", [](const Mat3& h, const std::array<double, 2>& p) {
    return from_point(apply_homography(Homography(h), to_point(p)));
  });
  m.def("quad_to_quad", [](const std::array<std::array<double, 2>, 4>& src,
                           const std::array<std::array<double, 2>, 4>& dst) {
    return quad_to_quad(to_quad(src), to_quad(dst)).matrix();
  });
  m.def("scaled_homography", [](const Mat3& h, const std::array<double, 2>& anchor, double s) {
    return scaled_homography(Homography(h), to_point(anchor), s).matrix();
  });
  m.def(
      "resolve_scale",
      [](const Mat3& h, const std::array<double, 2>& anchor, const std::array<double, 4>& box,
         const std::array<std::array<double, 2>, 4>& quad, double margin, double s_min, double s_max) {
        const ScaleResult r = resolve_scale(Homography(h), to_point(anchor),
                                            Box{box[0], box[1], box[2], box[3]}, to_quad(quad), margin,
                                            ScaleBounds{s_min, s_max});
        return py::make_tuple(r.s, r.out_of_sight);
      },
      py::arg("base"), py::arg("anchor"), py::arg("subject"), py::arg("quad"), py::arg("margin") = 0.05,
      py::arg("s_min") = 0.25, py::arg("s_max") = 4.0);

  // Config.
  m.def("parse_config", [](const std::string& text) { return format_config(parse_config(text)); },
        "Validates config text; returns every key with its effective value.");

  // Synthetic data.
  m.def(
      "synth_scene",
      [](std::uint64_t seed, int frames, double noise, double blur, const std::string& preset) {
        SceneParams p;
        p.seed = seed;
        p.frames = frames;
        p.noise_sigma = noise;
        p.blur_sigma = blur;
        p.motion = parse_motion_preset(preset);
        const SceneTruth t = synth_scene(p);
        py::list imgs;
        for (const auto& f : t.frames.frames) imgs.append(to_array(f));
        py::list truth;
        for (const auto& r : t.manifest) {
          py::dict d;
          d["frame"] = r.frame;
          d["mirror_id"] = r.mirror_id;
          d["quad"] = from_quad(r.quad);
          d["h"] = r.h.matrix();
          truth.append(d);
        }
        return py::make_tuple(imgs, truth);
      },
      py::arg("seed") = 1, py::arg("frames") = 10, py::arg("noise") = 0.0, py::arg("blur") = 0.0,
      py::arg("preset") = "sway");
  m.def(
      "synth_feed",
      [](std::uint64_t seed, int frames, int width, int height) {
        const FeedTruth t = synth_feed({seed, frames, width, height});
        py::list imgs;
        for (const auto& f : t.frames.frames) imgs.append(to_array(f));
        py::list boxes;
        for (const auto& b : t.subjects) {
          if (b) {
            boxes.append(py::make_tuple(b->x0, b->y0, b->x1, b->y1));
          } else {
            boxes.append(py::none());
          }
        }
        return py::make_tuple(imgs, boxes);
      },
      py::arg("seed") = 1, py::arg("frames") = 10, py::arg("width") = 320, py::arg("height") = 240);

  // Compositing.
  py::class_<Compositor>(m, "Compositor")
      .def(py::init([](const std::string& config) {
             ComposeConfig cc;
             cc.settings = parse_config(config);
             return std::make_unique<Compositor>(std::move(cc));
           }),
           py::arg("config") = "")
      .def("compose_frame",
           [](Compositor& c, const FloatArray& scene, const FloatArray& feed) {
             FrameResult r = c.compose_frame(to_image(scene), to_image(feed));
             py::list tracks;
             for (const auto& t : r.stats.reports) {
               py::dict d;
               d["mirror_id"] = t.mirror_id;
               d["alive"] = t.alive;
               d["detected"] = t.detected;
               d["s"] = t.s;
               d["out_of_sight"] = t.out_of_sight;
               d["h"] = t.h.matrix();
               d["error"] = t.error;
               tracks.append(d);
             }
             return py::make_tuple(to_array(r.image), format_stats(r.stats), tracks);
           })
      .def_property_readonly("frames_processed", &Compositor::frames_processed);
}
