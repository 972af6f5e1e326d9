#include "v2r/marker.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include <fftw3.h>

#include "v2r/error.hpp"

namespace v2r {
namespace {

constexpr double kFlatVariance = 1e-8;

// FFTW's planner is not reentrant; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

struct PlanDestroy {
  void operator()(fftw_plan p) const {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(p);
  }
};
using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDestroy>;

Image to_gray_copy(const Image& img) {
  return img.channels() == 1 ? img : to_grayscale(img);
}

// Gaussian blur of a real map with clamp-to-edge borders.
void blur_map(ScoreMap& map, double sigma) {
  const Kernel1D k = gaussian_kernel(sigma);
  const int r = k.radius();
  const int w = map.width();
  const int h = map.height();
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        acc += k.taps[i + r] * map.at(std::clamp(x + i, 0, w - 1), y);
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -r; j <= r; ++j) {
        acc += k.taps[j + r] * tmp[static_cast<std::size_t>(std::clamp(y + j, 0, h - 1)) * w + x];
      }
      map.at(x, y) = acc;
    }
  }
}

Image crop_gray(const Image& g, int x0, int y0, int w, int h) {
  Image out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    const float* src = g.row(y0 + y) + x0;
    std::copy(src, src + w, out.row(y));
  }
  return out;
}

// Zero-mean template values and their L2 norm.
struct CenteredTemplate {
  std::vector<double> values;
  double norm = 0.0;
};

CenteredTemplate center_template(const Image& tpl) {
  CenteredTemplate out;
  const auto data = tpl.data();
  double mean = 0.0;
  for (float v : data) mean += v;
  mean /= static_cast<double>(data.size());
  out.values.reserve(data.size());
  double ss = 0.0;
  for (float v : data) {
    const double c = v - mean;
    out.values.push_back(c);
    ss += c * c;
  }
  out.norm = std::sqrt(ss);
  if (!(out.norm > 0.0)) throw InvalidArgument("template has zero variance");
  return out;
}

// Quadratic fit on the 3x3 neighborhood; returns the offset of the fitted
// maximum when the surface is concave and the offset stays within a pixel.
std::optional<Point2> quadratic_peak(const double f[3][3]) {
  double b = 0.0, c = 0.0, d = 0.0, e = 0.0, g = 0.0;
  for (int j = -1; j <= 1; ++j) {
    for (int i = -1; i <= 1; ++i) {
      const double v = f[j + 1][i + 1];
      b += i * v;
      c += j * v;
      d += (i * i - 2.0 / 3.0) * v;
      g += (j * j - 2.0 / 3.0) * v;
      e += i * j * v;
    }
  }
  b /= 6.0;
  c /= 6.0;
  d /= 2.0;
  g /= 2.0;
  e /= 4.0;
  // f ~ b x + c y + d x^2 + e x y + g y^2
  const double hxx = 2.0 * d;
  const double hyy = 2.0 * g;
  const double det = hxx * hyy - e * e;
  if (!(hxx < 0.0) || !(det > 0.0)) return std::nullopt;
  const double dx = (-b * hyy + c * e) / det;
  const double dy = (-c * hxx + b * e) / det;
  if (std::abs(dx) > 1.0 || std::abs(dy) > 1.0) return std::nullopt;
  return Point2{dx, dy};
}

}  // namespace

// ---------------------------------------------------------------------------
// Rendering.

double marker_coverage(double dx, double dy, double side, int class_id) {
  const double radius = 0.5 * side;
  const bool phase = (class_id & 1) != 0;
  const bool rim = (class_id & 2) != 0;
  const bool band = (class_id & 4) != 0;
  double acc = 0.0;
  for (int sy = 0; sy < 4; ++sy) {
    for (int sx = 0; sx < 4; ++sx) {
      const double x = dx + (sx + 0.5) / 4.0 - 0.5;
      const double y = dy + (sy + 0.5) / 4.0 - 0.5;
      const double r = std::hypot(x, y);
      if (r > radius) {
        acc += 0.5;
        continue;
      }
      bool white = (x < 0.0) != (y < 0.0);  // TR and BL
      if (phase) white = !white;
      if (rim && r > 0.75 * radius) white = !white;
      if (band && r > 0.5 * radius && r <= 0.75 * radius) white = !white;
      acc += white ? 1.0 : 0.0;
    }
  }
  return acc / 16.0;
}

MarkerTemplate render_marker(int side, int class_id) {
  if (side < 15 || side % 2 == 0) {
    throw InvalidArgument("marker side must be odd and at least 15, got " +
                          std::to_string(side));
  }
  if (class_id < 0 || class_id >= kMaxMarkerClasses) {
    throw InvalidArgument("marker class must lie in [0, " +
                          std::to_string(kMaxMarkerClasses) + ")");
  }
  MarkerTemplate tpl{class_id, class_id & 1, Image(side, side, 1)};
  const double c = (side - 1) / 2.0;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      tpl.image.at(x, y) = static_cast<float>(marker_coverage(x - c, y - c, side, class_id));
    }
  }
  return tpl;
}

void paint_marker(Image& img, Point2 center, int side, int class_id) {
  const double half = 0.5 * side;
  const int x0 = std::max(0, static_cast<int>(std::floor(center.x - half - 1)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(center.x + half + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(center.y - half - 1)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(center.y + half + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - center.x;
      const double dy = y - center.y;
      // Fraction of the pixel covered by the square card.
      const double fx = std::clamp(half + 0.5 - std::abs(dx), 0.0, 1.0);
      const double fy = std::clamp(half + 0.5 - std::abs(dy), 0.0, 1.0);
      const double cover = fx * fy;
      if (cover <= 0.0) continue;
      const double v = marker_coverage(dx, dy, side, class_id);
      for (int c = 0; c < img.channels(); ++c) {
        const double bg = img.at(x, y, c);
        img.at(x, y, c) = static_cast<float>((1.0 - cover) * bg + cover * v);
      }
    }
  }
}

std::vector<MarkerTemplate> make_template_bank(int side, int mirrors) {
  if (mirrors < 1 || 4 * mirrors > kMaxMarkerClasses) {
    throw InvalidArgument("supported mirror count is 1.." +
                          std::to_string(kMaxMarkerClasses / 4));
  }
  std::vector<MarkerTemplate> bank;
  for (int c = 0; c < 4 * mirrors; ++c) bank.push_back(render_marker(side, c));
  return bank;
}

// ---------------------------------------------------------------------------
// Correlation.

ValidRegion ncc_valid_region(int img_w, int img_h, int tpl_side) {
  const int h = tpl_side / 2;
  return {h, h, img_w - 1 - h, img_h - 1 - h};
}

struct MarkerDetector::Spectra {
  int w = 0;
  int h = 0;
  Plan forward;
  Plan inverse;
  // One spectrum per distinct template up to sign.
  std::vector<FftwBuffer<fftw_complex>> spectra;
  // Per bank entry: index into spectra and sign.
  std::vector<std::pair<int, double>> route;
  std::vector<double> norms;

  std::size_t complex_size() const {
    return static_cast<std::size_t>(h) * (w / 2 + 1);
  }
};

namespace {

std::unique_ptr<MarkerDetector::Spectra> build_spectra(
    int w, int h, const std::vector<MarkerTemplate>& bank) {
  auto s = std::make_unique<MarkerDetector::Spectra>();
  s->w = w;
  s->h = h;
  const std::size_t real_size = static_cast<std::size_t>(w) * h;
  auto real = fftw_alloc<double>(real_size);
  auto cplx = fftw_alloc<fftw_complex>(s->complex_size());
  {
    std::lock_guard lock(planner_mutex());
    // FFTW_ESTIMATE keeps the chosen algorithm, and therefore every rounding
    // decision, identical from run to run.
    s->forward.reset(fftw_plan_dft_r2c_2d(h, w, real.get(), cplx.get(), FFTW_ESTIMATE));
    s->inverse.reset(fftw_plan_dft_c2r_2d(h, w, cplx.get(), real.get(), FFTW_ESTIMATE));
  }
  if (!s->forward || !s->inverse) throw Error("FFT planning failed");

  std::vector<CenteredTemplate> distinct;
  for (const auto& tpl : bank) {
    CenteredTemplate ct = center_template(tpl.image);
    s->norms.push_back(ct.norm);
    int found = -1;
    double sign = 1.0;
    for (std::size_t u = 0; u < distinct.size() && found < 0; ++u) {
      if (distinct[u].values.size() != ct.values.size()) continue;
      double same = 0.0;
      double flip = 0.0;
      for (std::size_t i = 0; i < ct.values.size(); ++i) {
        same = std::max(same, std::abs(ct.values[i] - distinct[u].values[i]));
        flip = std::max(flip, std::abs(ct.values[i] + distinct[u].values[i]));
      }
      if (same < 1e-7) {
        found = static_cast<int>(u);
      } else if (flip < 1e-7) {
        found = static_cast<int>(u);
        sign = -1.0;
      }
    }
    if (found < 0) {
      const int side = tpl.side();
      std::fill(real.get(), real.get() + real_size, 0.0);
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          real[static_cast<std::size_t>(y) * w + x] = ct.values[static_cast<std::size_t>(y) * side + x];
        }
      }
      auto spec = fftw_alloc<fftw_complex>(s->complex_size());
      fftw_execute_dft_r2c(s->forward.get(), real.get(), spec.get());
      s->spectra.push_back(std::move(spec));
      found = static_cast<int>(distinct.size());
      distinct.push_back(std::move(ct));
    }
    s->route.emplace_back(found, sign);
  }
  return s;
}

// Reciprocal of sqrt(sum (I - mean)^2) per valid window, 0 for flat windows.
std::vector<double> window_inverse_norms(const Image& gray, int side) {
  const IntegralImages ii(gray);
  const int w = gray.width();
  const int h = gray.height();
  const ValidRegion vr = ncc_valid_region(w, h, side);
  const double n = static_cast<double>(side) * side;
  std::vector<double> inv(static_cast<std::size_t>(w) * h, 0.0);
  for (int cy = vr.y0; cy <= vr.y1; ++cy) {
    for (int cx = vr.x0; cx <= vr.x1; ++cx) {
      const int x0 = cx - side / 2;
      const int y0 = cy - side / 2;
      const double s1 = ii.sum(x0, y0, x0 + side, y0 + side);
      const double s2 = ii.sum_sq(x0, y0, x0 + side, y0 + side);
      const double var = s2 / n - (s1 / n) * (s1 / n);
      if (var < kFlatVariance) continue;
      inv[static_cast<std::size_t>(cy) * w + cx] = 1.0 / std::sqrt(s2 - s1 * s1 / n);
    }
  }
  return inv;
}

// Fills one NCC map per bank entry.
std::vector<ScoreMap> correlate_bank(const Image& gray,
                                     const std::vector<MarkerTemplate>& bank,
                                     const MarkerDetector::Spectra& s) {
  const int w = gray.width();
  const int h = gray.height();
  const int side = bank.front().side();
  const std::size_t real_size = static_cast<std::size_t>(w) * h;
  const std::size_t csize = s.complex_size();

  auto real = fftw_alloc<double>(real_size);
  auto image_spec = fftw_alloc<fftw_complex>(csize);
  auto product = fftw_alloc<fftw_complex>(csize);
  auto corr = fftw_alloc<double>(real_size);
  const auto src = gray.data();
  std::copy(src.begin(), src.end(), real.get());
  fftw_execute_dft_r2c(s.forward.get(), real.get(), image_spec.get());

  const std::vector<double> inv = window_inverse_norms(gray, side);
  const ValidRegion vr = ncc_valid_region(w, h, side);
  const double scale = 1.0 / static_cast<double>(real_size);

  std::vector<ScoreMap> maps(bank.size(), ScoreMap(w, h, 0.0));
  for (std::size_t u = 0; u < s.spectra.size(); ++u) {
    const fftw_complex* t = s.spectra[u].get();
    for (std::size_t i = 0; i < csize; ++i) {
      const double ar = image_spec[i][0];
      const double ai = image_spec[i][1];
      const double br = t[i][0];
      const double bi = -t[i][1];
      product[i][0] = ar * br - ai * bi;
      product[i][1] = ar * bi + ai * br;
    }
    fftw_execute_dft_c2r(s.inverse.get(), product.get(), corr.get());
    for (std::size_t b = 0; b < bank.size(); ++b) {
      if (s.route[b].first != static_cast<int>(u)) continue;
      const double k = s.route[b].second * scale / s.norms[b];
      ScoreMap& m = maps[b];
      for (int cy = vr.y0; cy <= vr.y1; ++cy) {
        const std::size_t top = static_cast<std::size_t>(cy - side / 2) * w;
        for (int cx = vr.x0; cx <= vr.x1; ++cx) {
          const double iv = inv[static_cast<std::size_t>(cy) * w + cx];
          if (iv == 0.0) continue;
          const double v = corr[top + (cx - side / 2)] * k * iv;
          m.at(cx, cy) = std::clamp(v, -1.0, 1.0);
        }
      }
    }
  }
  return maps;
}

}  // namespace

ScoreMap ncc_score_map(const Image& gray, const MarkerTemplate& tpl) {
  if (gray.channels() != 1 || tpl.image.channels() != 1) {
    throw InvalidArgument("ncc_score_map expects 1-channel inputs");
  }
  if (tpl.side() > gray.width() || tpl.side() > gray.height() ||
      tpl.image.height() != tpl.side() || tpl.side() % 2 == 0) {
    throw InvalidArgument("template must be square, odd, and fit inside the image");
  }
  const std::vector<MarkerTemplate> bank{tpl};
  const auto spectra = build_spectra(gray.width(), gray.height(), bank);
  return std::move(correlate_bank(gray, bank, *spectra).front());
}

double ncc(const Image& a, const Image& b) {
  if (a.data().size() != b.data().size()) {
    throw InvalidArgument("ncc inputs must have the same size");
  }
  const auto da = a.data();
  const auto db = b.data();
  const double n = static_cast<double>(da.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    ma += da[i];
    mb += db[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double x = da[i] - ma;
    const double y = db[i] - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  if (saa / n < kFlatVariance || sbb / n < kFlatVariance) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Corner and circle operators.

ScoreMap harris_response(const Image& gray, double sigma_w, double k) {
  if (!(sigma_w > 0.0) || !std::isfinite(sigma_w)) {
    throw InvalidArgument("harris window sigma must be positive");
  }
  if (!(k > 0.0 && k < 0.25)) {
    throw InvalidArgument("harris k must lie in (0, 0.25)");
  }
  const Gradients g = sobel_gradients(gray);
  const int w = gray.width();
  const int h = gray.height();
  ScoreMap xx(w, h), yy(w, h), xy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = g.gx.at(x, y);
      const double gy = g.gy.at(x, y);
      xx.at(x, y) = gx * gx;
      yy.at(x, y) = gy * gy;
      xy.at(x, y) = gx * gy;
    }
  }
  blur_map(xx, sigma_w);
  blur_map(yy, sigma_w);
  blur_map(xy, sigma_w);
  ScoreMap r(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = xx.at(x, y);
      const double b = yy.at(x, y);
      const double c = xy.at(x, y);
      const double tr = a + b;
      r.at(x, y) = a * b - c * c - k * tr * tr;
    }
  }
  return r;
}

ScoreMap edge_map(const Gradients& grads, double thresh) {
  if (!(thresh > 0.0)) throw InvalidArgument("edge threshold must be positive");
  const int w = grads.gx.width();
  const int h = grads.gx.height();
  ScoreMap e(w, h);
  const double t2 = thresh * thresh;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = grads.gx.at(x, y);
      const double gy = grads.gy.at(x, y);
      e.at(x, y) = (gx * gx + gy * gy >= t2) ? 1.0 : 0.0;
    }
  }
  return e;
}

ScoreMap edge_map(const Image& gray, double thresh) {
  return edge_map(sobel_gradients(gray), thresh);
}

std::vector<Circle> hough_circles(const ScoreMap& edges, const Gradients& grads,
                                  int r_min, int r_max, double vote_frac) {
  if (r_min < 2 || r_max < r_min) {
    throw InvalidArgument("hough radius range must satisfy 2 <= r_min <= r_max");
  }
  const int w = edges.width();
  const int h = edges.height();
  const int nr = r_max - r_min + 1;
  std::vector<int> acc(static_cast<std::size_t>(nr) * w * h, 0);
  auto cell = [&](int ri, int x, int y) -> int& {
    return acc[(static_cast<std::size_t>(ri) * h + y) * w + x];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (edges.at(x, y) == 0.0) continue;
      const double gx = grads.gx.at(x, y);
      const double gy = grads.gy.at(x, y);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      const double ux = gx / mag;
      const double uy = gy / mag;
      for (int ri = 0; ri < nr; ++ri) {
        const int r = r_min + ri;
        for (const double sgn : {1.0, -1.0}) {
          const int cx = static_cast<int>(std::lround(x + sgn * r * ux));
          const int cy = static_cast<int>(std::lround(y + sgn * r * uy));
          if (cx >= 0 && cx < w && cy >= 0 && cy < h) ++cell(ri, cx, cy);
        }
      }
    }
  }

  std::vector<Circle> out;
  for (int ri = 0; ri < nr; ++ri) {
    const int r = r_min + ri;
    const double need = vote_frac * 2.0 * std::numbers::pi * r;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int v = cell(ri, x, y);
        if (v == 0 || v < need) continue;
        bool peak = true;
        for (int j = -1; j <= 1 && peak; ++j) {
          for (int i = -1; i <= 1; ++i) {
            if (i == 0 && j == 0) continue;
            const int nx = x + i;
            const int ny = y + j;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const int nv = cell(ri, nx, ny);
            // Plateaus keep their first cell in raster order.
            const bool earlier = j < 0 || (j == 0 && i < 0);
            if (nv > v || (earlier && nv == v)) {
              peak = false;
              break;
            }
          }
        }
        if (peak) out.push_back({double(x), double(y), r, v});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Circle& a, const Circle& b) {
    return a.votes > b.votes;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Detection.

namespace {

struct Candidate {
  double score;
  std::size_t tpl;
  int x, y;
  double f[3][3];  // NCC neighborhood for the subpixel fit
  bool has_f;
};

// 2x2 box reduction; output pixel (i, j) sits at full-res (2i + 0.5, 2j + 0.5).
Image reduce2(const Image& g) {
  const int w = g.width() / 2;
  const int h = g.height() / 2;
  Image out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    const float* r0 = g.row(2 * y);
    const float* r1 = g.row(2 * y + 1);
    float* dst = out.row(y);
    for (int x = 0; x < w; ++x) {
      dst[x] = 0.25f * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
    }
  }
  return out;
}

// A marker of diameter `side` rendered on a `grid`-pixel patch.
MarkerTemplate render_scaled(int grid, double side, int class_id) {
  MarkerTemplate t{class_id, class_id & 1, Image(grid, grid, 1)};
  const double c = (grid - 1) / 2.0;
  for (int y = 0; y < grid; ++y) {
    for (int x = 0; x < grid; ++x) {
      t.image.at(x, y) = static_cast<float>(marker_coverage(x - c, y - c, side, class_id));
    }
  }
  return t;
}

// Coarse scores are allowed this far below ncc_thresh; the full-resolution
// score decides.
constexpr double kCoarseSlack = 0.1;
// Full-res search radius around a coarse peak.
constexpr int kRefineRadius = 3;

template <typename Emit>
void scan_peaks(const ScoreMap& m, const ValidRegion& vr, double thresh, Emit&& emit) {
  for (int y = vr.y0; y <= vr.y1; ++y) {
    for (int x = vr.x0; x <= vr.x1; ++x) {
      const double v = m.at(x, y);
      if (v < thresh) continue;
      bool peak = true;
      for (int j = -1; j <= 1 && peak; ++j) {
        for (int i = -1; i <= 1; ++i) {
          if ((i == 0 && j == 0) || x + i < vr.x0 || x + i > vr.x1 || y + j < vr.y0 ||
              y + j > vr.y1) {
            continue;
          }
          if (m.at(x + i, y + j) > v) {
            peak = false;
            break;
          }
        }
      }
      if (peak) emit(v, x, y);
    }
  }
}

}  // namespace

MarkerDetector::MarkerDetector(std::vector<MarkerTemplate> bank, DetectParams params)
    : bank_(std::move(bank)), params_(params) {
  if (bank_.empty()) throw InvalidArgument("template bank is empty");
  const int side = bank_.front().side();
  for (const auto& t : bank_) {
    if (t.side() != side || t.image.height() != side || t.image.channels() != 1) {
      throw InvalidArgument("templates must share one square size");
    }
  }
  if (params_.median_radius < 0) throw InvalidArgument("median radius must be >= 0");
  if (!(params_.verify_radius > 0.0)) throw InvalidArgument("verify radius must be positive");
  if (params_.pyramid && side >= 31) {
    int grid = side / 2;
    if (grid % 2 == 0) --grid;
    for (const auto& t : bank_) coarse_bank_.push_back(render_scaled(grid, side / 2.0, t.class_id));
  }
}

MarkerDetector::~MarkerDetector() = default;

std::shared_ptr<const MarkerDetector::Spectra> MarkerDetector::spectra_for(int w, int h,
                                                                           bool coarse) const {
  std::lock_guard lock(mu_);
  auto& slot = coarse ? cached_coarse_ : cached_;
  if (!slot || slot->w != w || slot->h != h) slot = build_spectra(w, h, coarse ? coarse_bank_ : bank_);
  return slot;
}

Image MarkerDetector::preprocess(const Image& img) const {
  Image g = to_gray_copy(img);
  if (params_.median_radius > 0) g = median_filter(g, params_.median_radius);
  if (params_.sigma > 0.0) g = gaussian_filter(g, params_.sigma);
  return g;
}

std::vector<MarkerHit> MarkerDetector::detect(const Image& img) const {
  const int side = bank_.front().side();
  const int hs = side / 2;
  if (img.width() < side || img.height() < side) return {};
  const int w = img.width();
  const int h = img.height();
  const ValidRegion vr = ncc_valid_region(w, h, side);
  const bool coarse = !coarse_bank_.empty() && w / 2 >= 2 * coarse_bank_.front().side() &&
                      h / 2 >= 2 * coarse_bank_.front().side();

  // Filtered gray values over [x0, x1] x [y0, y1], identical to the same
  // window of preprocess(img).
  Image gray;
  Image full;
  const int margin = params_.median_radius +
                     (params_.sigma > 0.0 ? gaussian_kernel(params_.sigma).radius() : 0);
  auto filtered_roi = [&](int x0, int y0, int x1, int y1) {
    if (!coarse) return crop_gray(full, x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    const int mx0 = std::max(0, x0 - margin);
    const int my0 = std::max(0, y0 - margin);
    const int mx1 = std::min(w - 1, x1 + margin);
    const int my1 = std::min(h - 1, y1 + margin);
    Image roi = crop_gray(gray, mx0, my0, mx1 - mx0 + 1, my1 - my0 + 1);
    if (params_.median_radius > 0) roi = median_filter(roi, params_.median_radius);
    if (params_.sigma > 0.0) roi = gaussian_filter(roi, params_.sigma);
    return crop_gray(roi, x0 - mx0, y0 - my0, x1 - x0 + 1, y1 - y0 + 1);
  };

  std::vector<Candidate> cands;
  if (!coarse) {
    full = preprocess(img);
    const auto spectra = spectra_for(w, h, false);
    const std::vector<ScoreMap> maps = correlate_bank(full, bank_, *spectra);
    for (std::size_t t = 0; t < maps.size(); ++t) {
      const ScoreMap& m = maps[t];
      scan_peaks(m, vr, params_.ncc_thresh, [&](double v, int x, int y) {
        Candidate c{v, t, x, y, {}, false};
        if (x > vr.x0 && x < vr.x1 && y > vr.y0 && y < vr.y1) {
          for (int j = -1; j <= 1; ++j) {
            for (int i = -1; i <= 1; ++i) c.f[j + 1][i + 1] = m.at(x + i, y + j);
          }
          c.has_f = true;
        }
        cands.push_back(c);
      });
    }
  } else {
    gray = to_gray_copy(img);
    Image half = reduce2(gray);
    if (params_.median_radius > 0) half = median_filter(half, params_.median_radius);
    if (params_.sigma > 0.0) half = gaussian_filter(half, 0.5 * params_.sigma);
    const int cside = coarse_bank_.front().side();
    const auto spectra = spectra_for(half.width(), half.height(), true);
    const std::vector<ScoreMap> maps = correlate_bank(half, coarse_bank_, *spectra);
    const ValidRegion cvr = ncc_valid_region(half.width(), half.height(), cside);
    struct Seed {
      double score;
      std::size_t tpl;
      int x, y;
    };
    std::vector<Seed> seeds;
    for (std::size_t t = 0; t < maps.size(); ++t) {
      scan_peaks(maps[t], cvr, params_.ncc_thresh - kCoarseSlack,
                 [&](double v, int x, int y) { seeds.push_back({v, t, x, y}); });
    }
    std::stable_sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.tpl != b.tpl) return a.tpl < b.tpl;
      return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    std::vector<Seed> kept;
    for (const auto& s : seeds) {
      const bool near = std::any_of(kept.begin(), kept.end(), [&](const Seed& k) {
        return std::hypot(double(s.x - k.x), double(s.y - k.y)) <= cside / 2.0;
      });
      if (!near) kept.push_back(s);
    }

    const double n = static_cast<double>(side) * side;
    std::vector<CenteredTemplate> tpls;
    for (const auto& t : bank_) tpls.push_back(center_template(t.image));
    for (const auto& s : kept) {
      const int cx = 2 * s.x + 1;
      const int cy = 2 * s.y + 1;
      // Scored centers: the search window plus a one-pixel ring.
      const int wx0 = std::max(vr.x0, cx - kRefineRadius - 1);
      const int wy0 = std::max(vr.y0, cy - kRefineRadius - 1);
      const int wx1 = std::min(vr.x1, cx + kRefineRadius + 1);
      const int wy1 = std::min(vr.y1, cy + kRefineRadius + 1);
      if (wx1 < wx0 || wy1 < wy0) continue;
      const Image roi = filtered_roi(wx0 - hs, wy0 - hs, wx1 + hs, wy1 + hs);
      const int ww = wx1 - wx0 + 1;
      const int wh = wy1 - wy0 + 1;
      // Per-center window statistics, then NCC per template on demand.
      std::vector<double> inv_denom(static_cast<std::size_t>(ww) * wh, 0.0);
      for (int y = wy0; y <= wy1; ++y) {
        for (int x = wx0; x <= wx1; ++x) {
          double s1 = 0.0, s2 = 0.0;
          for (int j = 0; j < side; ++j) {
            const float* r = roi.row(y - wy0 + j) + (x - wx0);
            for (int i = 0; i < side; ++i) {
              s1 += r[i];
              s2 += double(r[i]) * r[i];
            }
          }
          const double var = s2 / n - (s1 / n) * (s1 / n);
          if (var < kFlatVariance) continue;
          inv_denom[static_cast<std::size_t>(y - wy0) * ww + (x - wx0)] =
              1.0 / std::sqrt(s2 - s1 * s1 / n);
        }
      }
      auto ncc_at = [&](std::size_t t, int x, int y) {
        const double id = inv_denom[static_cast<std::size_t>(y - wy0) * ww + (x - wx0)];
        if (id == 0.0) return 0.0;
        const double* tv = tpls[t].values.data();
        double acc = 0.0;
        for (int j = 0; j < side; ++j) {
          const float* r = roi.row(y - wy0 + j) + (x - wx0);
          const double* trow = tv + static_cast<std::size_t>(j) * side;
          for (int i = 0; i < side; ++i) acc += trow[i] * r[i];
        }
        return std::clamp(acc * id / tpls[t].norm, -1.0, 1.0);
      };
      std::vector<std::vector<double>> sc(tpls.size());
      auto score = [&](std::size_t t, int x, int y) -> double {
        if (sc[t].empty()) {
          sc[t].resize(static_cast<std::size_t>(ww) * wh);
          for (int yy = wy0; yy <= wy1; ++yy) {
            for (int xx = wx0; xx <= wx1; ++xx) {
              sc[t][static_cast<std::size_t>(yy - wy0) * ww + (xx - wx0)] = ncc_at(t, xx, yy);
            }
          }
        }
        return sc[t][static_cast<std::size_t>(y - wy0) * ww + (x - wx0)];
      };
      // Best center for the seed's template; another template only takes
      // over if it scores higher there, and is then searched in full.
      const int sx0 = std::max(wx0, cx - kRefineRadius);
      const int sy0 = std::max(wy0, cy - kRefineRadius);
      const int sx1 = std::min(wx1, cx + kRefineRadius);
      const int sy1 = std::min(wy1, cy + kRefineRadius);
      std::vector<std::size_t> searched;
      std::optional<Candidate> best;
      auto search = [&](std::size_t t) {
        searched.push_back(t);
        for (int y = sy0; y <= sy1; ++y) {
          for (int x = sx0; x <= sx1; ++x) {
            const double v = score(t, x, y);
            const bool better = !best || v > best->score ||
                                (v == best->score && t < best->tpl);
            if (better) best = Candidate{v, t, x, y, {}, false};
          }
        }
      };
      search(s.tpl);
      for (bool grew = true; grew;) {
        grew = false;
        for (std::size_t t = 0; t < tpls.size(); ++t) {
          if (std::find(searched.begin(), searched.end(), t) != searched.end()) continue;
          if (ncc_at(t, best->x, best->y) >= best->score) {
            search(t);
            grew = true;
          }
        }
      }
      if (!best || best->score < params_.ncc_thresh) continue;
      Candidate c = *best;
      bool peak = true;
      for (int j = -1; j <= 1; ++j) {
        for (int i = -1; i <= 1; ++i) {
          const int x = c.x + i;
          const int y = c.y + j;
          if (x < wx0 || x > wx1 || y < wy0 || y > wy1) continue;
          c.f[j + 1][i + 1] = score(c.tpl, x, y);
          if (c.f[j + 1][i + 1] > c.score) peak = false;
        }
      }
      if (!peak) continue;
      c.has_f = c.x > vr.x0 && c.x < vr.x1 && c.y > vr.y0 && c.y < vr.y1;
      cands.push_back(c);
    }
  }

  std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (bank_[a.tpl].class_id != bank_[b.tpl].class_id) {
      return bank_[a.tpl].class_id < bank_[b.tpl].class_id;
    }
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });

  const double nms = side / 2.0;
  std::vector<Candidate> kept;
  for (const auto& c : cands) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Candidate& k) {
      return std::hypot(double(c.x - k.x), double(c.y - k.y)) <= nms;
    });
    if (!suppressed) kept.push_back(c);
  }

  std::vector<MarkerHit> hits;
  const double vr2 = params_.verify_radius * params_.verify_radius;
  const int reach = std::max(hs, params_.hough_r_max) +
                    static_cast<int>(std::ceil(params_.verify_radius)) + 2;
  for (const auto& c : kept) {
    const int x0 = std::max(0, c.x - reach);
    const int y0 = std::max(0, c.y - reach);
    const int x1 = std::min(w - 1, c.x + reach);
    const int y1 = std::min(h - 1, c.y + reach);
    const Image roi = filtered_roi(x0, y0, x1, y1);
    const double px = c.x - x0;
    const double py = c.y - y0;

    // Harris: a strong local maximum near the correlation peak.
    const ScoreMap resp = harris_response(roi, params_.harris_sigma, params_.harris_k);
    double rmax = 0.0;
    for (double v : resp.values()) rmax = std::max(rmax, v);
    bool harris_ok = false;
    const int vri = static_cast<int>(std::ceil(params_.verify_radius));
    for (int y = std::max(1, int(py) - vri); y <= std::min(resp.height() - 2, int(py) + vri) && !harris_ok; ++y) {
      for (int x = std::max(1, int(px) - vri); x <= std::min(resp.width() - 2, int(px) + vri); ++x) {
        const double v = resp.at(x, y);
        if (!(v > 0.0) || v < params_.harris_rel * rmax) continue;
        if ((x - px) * (x - px) + (y - py) * (y - py) > vr2) continue;
        bool peak = true;
        for (int j = -1; j <= 1 && peak; ++j) {
          for (int i = -1; i <= 1; ++i) {
            if ((i || j) && resp.at(x + i, y + j) > v) {
              peak = false;
              break;
            }
          }
        }
        if (peak) {
          harris_ok = true;
          break;
        }
      }
    }
    if (!harris_ok) continue;

    // Hough: a circle centered near the peak.
    const Gradients grads = sobel_gradients(roi);
    const ScoreMap edges = edge_map(grads, params_.edge_thresh);
    const auto circles = hough_circles(edges, grads, params_.hough_r_min,
                                       params_.hough_r_max, params_.hough_vote_frac);
    const auto circle = std::find_if(circles.begin(), circles.end(), [&](const Circle& k) {
      return (k.cx - px) * (k.cx - px) + (k.cy - py) * (k.cy - py) <= vr2;
    });
    if (circle == circles.end()) continue;

    Point2 center{double(c.x), double(c.y)};
    if (c.has_f) {
      if (const auto off = quadratic_peak(c.f)) center = center + *off;
    }
    MarkerHit hit;
    hit.center = center;
    hit.score = c.score;
    hit.class_id = bank_[c.tpl].class_id;
    hit.radius = circle->r;
    hit.role = static_cast<CornerRole>(hit.class_id % 4);
    hits.push_back(hit);
  }
  return hits;
}

std::vector<MarkerHit> detect_markers(const Image& img,
                                      const std::vector<MarkerTemplate>& bank,
                                      const DetectParams& params) {
  return MarkerDetector(bank, params).detect(img);
}

Classification classify_marker(const Image& patch, std::span<const MarkerTemplate> bank) {
  if (bank.empty()) throw InvalidArgument("template bank is empty");
  Classification best{-1, -2.0};
  for (const auto& t : bank) {
    if (!t.image.same_shape(patch)) {
      throw InvalidArgument("patch and template sizes differ");
    }
    const double s = ncc(patch, t.image);
    if (s > best.score || (s == best.score && t.class_id < best.class_id)) {
      best = {t.class_id, s};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Quads.

double MirrorQuad::signed_area() const {
  double a = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Point2 p = corners[i];
    const Point2 q = corners[(i + 1) % 4];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

void validate_quad(const MirrorQuad& quad) {
  for (const auto& p : quad.corners) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw DegenerateError("mirror quad has non-finite corners");
    }
  }
  for (int skip = 0; skip < 4; ++skip) {
    std::array<Point2, 3> t;
    int k = 0;
    for (int i = 0; i < 4; ++i) {
      if (i != skip) t[k++] = quad.corners[i];
    }
    if (std::abs(0.5 * signed_area2(t[0], t[1], t[2])) <= kQuadEpsilon) {
      throw DegenerateError("mirror " + std::to_string(quad.mirror_id) +
                            " has three collinear corners");
    }
  }
  if (!(quad.signed_area() > 0.0)) {
    throw DegenerateError("mirror " + std::to_string(quad.mirror_id) +
                          " corners are not in clockwise order");
  }
}

QuadAssembly corners_to_quad(std::span<const MarkerHit> hits) {
  std::map<int, std::array<const MarkerHit*, 4>> groups;
  for (const auto& h : hits) {
    if (h.class_id < 0) continue;
    auto& slots = groups[h.class_id / 4];
    const MarkerHit*& slot = slots[h.class_id % 4];
    if (slot == nullptr || h.score > slot->score) slot = &h;
  }
  QuadAssembly out;
  for (const auto& [mirror, slots] : groups) {
    if (std::any_of(slots.begin(), slots.end(), [](auto* p) { return p == nullptr; })) {
      out.incomplete.push_back(mirror);
      continue;
    }
    MirrorQuad q;
    q.mirror_id = mirror;
    for (int i = 0; i < 4; ++i) q.corners[i] = slots[i]->center;
    validate_quad(q);
    out.quads.push_back(q);
  }
  return out;
}

std::vector<MirrorQuad> single_marker_quads(std::span<const MarkerHit> hits,
                                            double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw InvalidArgument("single-marker quad size must be positive");
  }
  std::map<int, const MarkerHit*> best;
  for (const auto& h : hits) {
    auto& slot = best[h.class_id];
    if (slot == nullptr || h.score > slot->score) slot = &h;
  }
  std::vector<MirrorQuad> out;
  for (const auto& [cls, h] : best) {
    const double hw = 0.5 * width;
    const double hh = 0.5 * height;
    const Point2 c = h->center;
    MirrorQuad q;
    q.mirror_id = cls;
    q.corners = {Point2{c.x - hw, c.y - hh}, Point2{c.x + hw, c.y - hh},
                 Point2{c.x + hw, c.y + hh}, Point2{c.x - hw, c.y + hh}};
    out.push_back(q);
  }
  return out;
}

}  // namespace v2r
