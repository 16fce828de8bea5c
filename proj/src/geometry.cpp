#include "sfc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace sfc {

std::pair<double, double> CropGeometry::cell_center(int i, int j) const {
  if (i < 0 || i >= grid_h || j < 0 || j >= grid_w)
    throw std::out_of_range("cell_center: cell (" + std::to_string(i) + "," +
                            std::to_string(j) + ") outside grid " + std::to_string(grid_h) +
                            "x" + std::to_string(grid_w));
  const int jj = flipped ? grid_w - 1 - j : j;
  const double x = x0 + (jj + 0.5) * (w / static_cast<double>(grid_w));
  const double y = y0 + (i + 0.5) * (h / static_cast<double>(grid_h));
  return {x, y};
}

long PositiveMask::count() const {
  long c = 0;
  for (uint8_t v : m) c += v;
  return c;
}

static void validate_crop_args(int src_w, int src_h, double g1, double g2, double aspect_lo,
                               double aspect_hi, int out_size, int grid) {
  if (src_w < 1 || src_h < 1)
    throw ConfigError("sample_crop: source frame must be at least 1x1");
  if (!(g1 >= 0.0) || !(g2 <= 1.0) || !(g1 <= g2))
    throw ConfigError("sample_crop: need 0 <= g1 <= g2 <= 1, got [" + std::to_string(g1) +
                      "," + std::to_string(g2) + "]");
  if (!(aspect_lo > 0.0) || !(aspect_lo <= aspect_hi))
    throw ConfigError("sample_crop: invalid aspect range");
  if (out_size < 1 || grid < 1)
    throw ConfigError("sample_crop: out_size and grid must be positive");
}

CropGeometry sample_crop(int src_w, int src_h, double g1, double g2, double aspect_lo,
                         double aspect_hi, int out_size, int grid, Rng& rng, int max_tries) {
  validate_crop_args(src_w, src_h, g1, g2, aspect_lo, aspect_hi, out_size, grid);
  CropGeometry c;
  c.src_w = src_w;
  c.src_h = src_h;
  c.out_size = out_size;
  c.grid_h = grid;
  c.grid_w = grid;

  std::uniform_real_distribution<double> frac_d(g1, g2);
  std::uniform_real_distribution<double> logas_d(std::log(aspect_lo), std::log(aspect_hi));
  const double area_total = static_cast<double>(src_w) * src_h;
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    const double frac = frac_d(rng);
    const double aspect = std::exp(logas_d(rng));
    const double target = frac * area_total;
    const int w = std::max(1, static_cast<int>(std::lround(std::sqrt(target * aspect))));
    const int h = std::max(1, static_cast<int>(std::lround(std::sqrt(target / aspect))));
    if (w > src_w || h > src_h) continue;
    c.w = w;
    c.h = h;
    c.x0 = std::uniform_int_distribution<int>(0, src_w - w)(rng);
    c.y0 = std::uniform_int_distribution<int>(0, src_h - h)(rng);
    return c;
  }
  // Placement kept failing (extreme aspect on a small frame): whole frame.
  c.x0 = 0;
  c.y0 = 0;
  c.w = src_w;
  c.h = src_h;
  return c;
}

double overlap_fraction(const CropGeometry& a, const CropGeometry& b) {
  const double ix = std::max(0, std::min(a.x0 + a.w, b.x0 + b.w) - std::max(a.x0, b.x0));
  const double iy = std::max(0, std::min(a.y0 + a.h, b.y0 + b.h) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double amin = std::min(static_cast<double>(a.w) * a.h, static_cast<double>(b.w) * b.h);
  if (amin <= 0.0) throw ConfigError("overlap_fraction: degenerate crop");
  return inter / amin;
}

PositiveMask build_positive_mask(const CropGeometry& a, const CropGeometry& b, double r) {
  if (a.src_w != b.src_w || a.src_h != b.src_h)
    throw ShapeError("build_positive_mask: views come from different frames");
  if (a.grid_h < 1 || a.grid_w < 1 || b.grid_h < 1 || b.grid_w < 1)
    throw ShapeError("build_positive_mask: empty grid");
  if (!(r >= 0.0)) throw ConfigError("build_positive_mask: r must be >= 0");

  PositiveMask mask;
  mask.rows = a.grid_h * a.grid_w;
  mask.cols = b.grid_h * b.grid_w;
  mask.r = r;
  mask.m.assign(static_cast<size_t>(mask.rows) * mask.cols, 0);

  std::vector<double> ax(static_cast<size_t>(mask.rows)), ay(ax.size());
  std::vector<double> bx(static_cast<size_t>(mask.cols)), by(bx.size());
  for (int i = 0; i < a.grid_h; ++i)
    for (int j = 0; j < a.grid_w; ++j) {
      auto [x, y] = a.cell_center(i, j);
      ax[static_cast<size_t>(i) * a.grid_w + j] = x;
      ay[static_cast<size_t>(i) * a.grid_w + j] = y;
    }
  for (int i = 0; i < b.grid_h; ++i)
    for (int j = 0; j < b.grid_w; ++j) {
      auto [x, y] = b.cell_center(i, j);
      bx[static_cast<size_t>(i) * b.grid_w + j] = x;
      by[static_cast<size_t>(i) * b.grid_w + j] = y;
    }

  // Normalizing by the geometric-mean cell spacing makes r dimensionless:
  // r = 0.5 marks centers closer than half a cell.
  const double s = std::sqrt(a.mean_spacing() * b.mean_spacing());
  const double thr2 = (r * s) * (r * s);
  for (int p = 0; p < mask.rows; ++p)
    for (int q = 0; q < mask.cols; ++q) {
      const double dx = ax[static_cast<size_t>(p)] - bx[static_cast<size_t>(q)];
      const double dy = ay[static_cast<size_t>(p)] - by[static_cast<size_t>(q)];
      if (dx * dx + dy * dy <= thr2) mask.m[static_cast<size_t>(p) * mask.cols + q] = 1;
    }
  return mask;
}

ViewPairGeometry sample_view_pair_geometry(int src_w, int src_h, double g1, double g2,
                                           double aspect_lo, double aspect_hi, int out_size,
                                           int grid, double r, bool flip_enabled, Rng& rng,
                                           int max_tries) {
  ViewPairGeometry out;
  std::bernoulli_distribution flip_d(0.5);
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    CropGeometry a = sample_crop(src_w, src_h, g1, g2, aspect_lo, aspect_hi, out_size, grid, rng);
    CropGeometry b = sample_crop(src_w, src_h, g1, g2, aspect_lo, aspect_hi, out_size, grid, rng);
    if (flip_enabled) {
      a.flipped = flip_d(rng);
      b.flipped = flip_d(rng);
    }
    PositiveMask mask = build_positive_mask(a, b, r);
    if (mask.count() > 0) {
      out.a = a;
      out.b = b;
      out.mask = std::move(mask);
      out.resamples = attempt;
      return out;
    }
  }
  // Identical full-frame crops: every cell matches itself at distance zero.
  CropGeometry c;
  c.src_w = src_w;
  c.src_h = src_h;
  c.x0 = 0;
  c.y0 = 0;
  c.w = src_w;
  c.h = src_h;
  c.out_size = out_size;
  c.grid_h = grid;
  c.grid_w = grid;
  out.a = c;
  out.b = c;
  out.mask = build_positive_mask(c, c, r);
  out.resamples = max_tries;
  out.fallback = true;
  return out;
}

}  // namespace sfc
