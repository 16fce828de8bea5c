#include "sfc/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace sfc {

FeatureMap bilinear_resize(const FeatureMap& src, int out_h, int out_w) {
  if (out_h == src.h && out_w == src.w) return src;
  FeatureMap out(out_h, out_w, src.c);
  const double sy = static_cast<double>(src.h) / out_h;
  const double sx = static_cast<double>(src.w) / out_w;
  for (int i = 0; i < out_h; ++i) {
    double fy = (i + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const double wy = fy - y0;
    for (int j = 0; j < out_w; ++j) {
      double fx = (j + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const double wx = fx - x0;
      const double* p00 = src.at(y0, x0);
      const double* p01 = src.at(y0, x1);
      const double* p10 = src.at(y1, x0);
      const double* p11 = src.at(y1, x1);
      double* dst = out.at(i, j);
      for (int ch = 0; ch < src.c; ++ch) {
        const double top = p00[ch] + (p01[ch] - p00[ch]) * wx;
        const double bot = p10[ch] + (p11[ch] - p10[ch]) * wx;
        dst[ch] = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

FeatureMap l2_normalize_cells(const FeatureMap& src) {
  FeatureMap out = src;
  for (int i = 0; i < src.h; ++i)
    for (int j = 0; j < src.w; ++j) {
      double* v = out.at(i, j);
      double n2 = 0.0;
      for (int ch = 0; ch < src.c; ++ch) n2 += v[ch] * v[ch];
      const double n = std::sqrt(n2);
      if (n < 1e-12) continue;
      for (int ch = 0; ch < src.c; ++ch) v[ch] /= n;
    }
  return out;
}

FusedFeatureMap fuse_feature_maps(const FeatureMap& f_s, const FeatureMap& f_f, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("fusion: lambda must be >= 0");
  FeatureMap s = f_s, f = f_f;
  const long area_s = static_cast<long>(s.h) * s.w;
  const long area_f = static_cast<long>(f.h) * f.w;
  if (s.h != f.h || s.w != f.w) {
    if (area_s < area_f)
      s = bilinear_resize(s, f.h, f.w);
    else if (area_f < area_s)
      f = bilinear_resize(f, s.h, s.w);
  }
  if (s.h != f.h || s.w != f.w)
    throw ShapeError("fusion: grids " + std::to_string(f_s.h) + "x" + std::to_string(f_s.w) +
                     " and " + std::to_string(f_f.h) + "x" + std::to_string(f_f.w) +
                     " cannot be aligned");
  s = l2_normalize_cells(s);
  f = l2_normalize_cells(f);

  FusedFeatureMap out;
  out.c_semantic = s.c;
  out.c_fine = f.c;
  out.lambda = lambda;
  out.map = FeatureMap(s.h, s.w, s.c + f.c);
  for (int i = 0; i < s.h; ++i)
    for (int j = 0; j < s.w; ++j) {
      double* dst = out.map.at(i, j);
      const double* ps = s.at(i, j);
      const double* pf = f.at(i, j);
      for (int ch = 0; ch < s.c; ++ch) dst[ch] = ps[ch];
      for (int ch = 0; ch < f.c; ++ch) dst[s.c + ch] = lambda * pf[ch];
    }
  return out;
}

std::vector<double> fused_affinity(const FusedFeatureMap& q, int qi, int qj,
                                   const FusedFeatureMap& ctx) {
  if (q.lambda != ctx.lambda)
    throw ConfigError("fusion: affinity between maps fused with different lambda");
  if (q.map.c != ctx.map.c || q.c_semantic != ctx.c_semantic)
    throw ShapeError("fusion: channel layout mismatch");
  if (qi < 0 || qi >= q.map.h || qj < 0 || qj >= q.map.w)
    throw ShapeError("fusion: query cell out of range");
  const int c = q.map.c;
  const double* a = q.map.at(qi, qj);
  double na2 = 0.0;
  for (int ch = 0; ch < c; ++ch) na2 += a[ch] * a[ch];
  const double na = std::sqrt(na2);
  std::vector<double> out(static_cast<size_t>(ctx.map.cells()), 0.0);
  for (int i = 0; i < ctx.map.h; ++i)
    for (int j = 0; j < ctx.map.w; ++j) {
      const double* b = ctx.map.at(i, j);
      double dot = 0.0, nb2 = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        dot += a[ch] * b[ch];
        nb2 += b[ch] * b[ch];
      }
      const double nb = std::sqrt(nb2);
      out[static_cast<size_t>(i) * ctx.map.w + j] =
          (na < 1e-12 || nb < 1e-12) ? 0.0 : dot / (na * nb);
    }
  return out;
}

}  // namespace sfc
