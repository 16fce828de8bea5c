#include "sfc/propagation.hpp"

#include <algorithm>
#include <cmath>

namespace sfc {

SparseAffinity restricted_affinity(const FeatureMap& query,
                                   const std::vector<const FeatureMap*>& context, int radius,
                                   double tau) {
  if (context.empty()) throw ConfigError("affinity: empty context");
  if (radius < 0) throw ConfigError("affinity: radius must be >= 0");
  if (!(tau > 0.0)) throw ConfigError("affinity: tau must be > 0");
  for (const FeatureMap* m : context)
    if (m->h != query.h || m->w != query.w || m->c != query.c)
      throw ShapeError("affinity: context grid mismatch");

  const FeatureMap q = l2_normalize_cells(query);
  std::vector<FeatureMap> ctx;
  ctx.reserve(context.size());
  for (const FeatureMap* m : context) ctx.push_back(l2_normalize_cells(*m));

  SparseAffinity out;
  out.h = query.h;
  out.w = query.w;
  out.rows.resize(static_cast<size_t>(query.h) * query.w);
  std::vector<double> sims;
  for (int i = 0; i < query.h; ++i)
    for (int j = 0; j < query.w; ++j) {
      auto& row = out.rows[static_cast<size_t>(i) * query.w + j];
      const double* qv = q.at(i, j);
      const int r0 = std::max(0, i - radius), r1 = std::min(query.h - 1, i + radius);
      const int c0 = std::max(0, j - radius), c1 = std::min(query.w - 1, j + radius);
      sims.clear();
      double best = -2.0;
      for (size_t f = 0; f < ctx.size(); ++f)
        for (int r = r0; r <= r1; ++r)
          for (int c = c0; c <= c1; ++c) {
            const double* cv = ctx[f].at(r, c);
            double dot = 0.0;
            for (int ch = 0; ch < query.c; ++ch) dot += qv[ch] * cv[ch];
            sims.push_back(dot);
            best = std::max(best, dot);
          }
      row.reserve(sims.size());
      size_t idx = 0;
      for (size_t f = 0; f < ctx.size(); ++f)
        for (int r = r0; r <= r1; ++r)
          for (int c = c0; c <= c1; ++c)
            row.push_back({static_cast<int>(f), r, c, std::exp((sims[idx++] - best) / tau)});
      if (row.empty()) throw NumericError("affinity: empty candidate row");
    }
  return out;
}

LabelGrid propagate_frame(const SparseAffinity& aff,
                          const std::vector<const LabelGrid*>& context_labels, int top_k) {
  if (top_k < 1) throw ConfigError("propagation: top_k must be >= 1");
  if (context_labels.empty()) throw ConfigError("propagation: no context labels");
  const int l = context_labels[0]->l;
  for (const LabelGrid* lg : context_labels)
    if (lg->h != aff.h || lg->w != aff.w || lg->l != l)
      throw ShapeError("propagation: label grid mismatch");

  LabelGrid out(aff.h, aff.w, l);
  std::vector<AffinityCandidate> cands;
  for (int i = 0; i < aff.h; ++i)
    for (int j = 0; j < aff.w; ++j) {
      const auto& row = aff.rows[static_cast<size_t>(i) * aff.w + j];
      if (row.empty()) throw NumericError("propagation: empty affinity row");
      cands = row;
      const size_t k = std::min(cands.size(), static_cast<size_t>(top_k));
      std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(k), cands.end(),
                        [](const AffinityCandidate& a, const AffinityCandidate& b) {
                          if (a.w != b.w) return a.w > b.w;
                          if (a.frame != b.frame) return a.frame < b.frame;
                          if (a.row != b.row) return a.row < b.row;
                          return a.col < b.col;
                        });
      double sum = 0.0;
      for (size_t s = 0; s < k; ++s) sum += cands[s].w;
      double* dst = out.at(i, j);
      for (size_t s = 0; s < k; ++s) {
        const auto& c = cands[s];
        if (static_cast<size_t>(c.frame) >= context_labels.size())
          throw ShapeError("propagation: candidate frame out of range");
        const double weight = c.w / sum;
        const double* src = context_labels[static_cast<size_t>(c.frame)]->at(c.row, c.col);
        for (int ch = 0; ch < l; ++ch) dst[ch] += weight * src[ch];
      }
    }
  return out;
}

std::vector<int> context_frames(int t, int m) {
  std::vector<int> out{0};
  for (int f = std::max(1, t - m); f <= t - 1; ++f) out.push_back(f);
  return out;
}

std::vector<LabelGrid> propagate_video(const std::vector<FeatureMap>& frames,
                                       const LabelGrid& first_labels,
                                       const PropagationConfig& cfg) {
  cfg.validate();
  if (frames.empty()) throw ConfigError("propagation: no frames");
  for (const auto& f : frames)
    if (f.h != frames[0].h || f.w != frames[0].w || f.c != frames[0].c)
      throw ShapeError("propagation: inconsistent feature grids");
  if (first_labels.h != frames[0].h || first_labels.w != frames[0].w)
    throw ShapeError("propagation: labels on a " + std::to_string(first_labels.h) + "x" +
                     std::to_string(first_labels.w) + " grid, features on " +
                     std::to_string(frames[0].h) + "x" + std::to_string(frames[0].w));

  std::vector<LabelGrid> out;
  out.reserve(frames.size());
  out.push_back(first_labels);
  for (int t = 1; t < static_cast<int>(frames.size()); ++t) {
    const auto idx = context_frames(t, cfg.context_m);
    std::vector<const FeatureMap*> feats;
    std::vector<const LabelGrid*> labels;
    for (int f : idx) {
      feats.push_back(&frames[static_cast<size_t>(f)]);
      labels.push_back(&out[static_cast<size_t>(f)]);
    }
    out.push_back(propagate_frame(restricted_affinity(frames[static_cast<size_t>(t)], feats,
                                                      cfg.radius, cfg.tau),
                                  labels, cfg.top_k));
  }
  return out;
}

LabelGrid labels_from_image(const ByteImage& classes, int grid_h, int grid_w, int num_classes) {
  if (grid_h < 1 || grid_w < 1) throw ShapeError("labels: invalid grid");
  if (classes.h % grid_h != 0 || classes.w % grid_w != 0)
    throw ShapeError("labels: image " + std::to_string(classes.w) + "x" +
                     std::to_string(classes.h) + " not divisible by grid " +
                     std::to_string(grid_w) + "x" + std::to_string(grid_h));
  if (num_classes < 1) throw ConfigError("labels: need at least one class");
  const int ch = classes.h / grid_h, cw = classes.w / grid_w;
  const double inv = 1.0 / (static_cast<double>(ch) * cw);
  LabelGrid out(grid_h, grid_w, num_classes);
  for (int y = 0; y < classes.h; ++y)
    for (int x = 0; x < classes.w; ++x) {
      const uint8_t cls = classes.at(x, y);
      if (cls >= num_classes)
        throw DataError("labels: class " + std::to_string(cls) + " at (" + std::to_string(x) +
                        "," + std::to_string(y) + ") outside " + std::to_string(num_classes) +
                        " classes");
      out.at(y / ch, x / cw)[cls] += inv;
    }
  return out;
}

ByteImage labels_to_image(const LabelGrid& lg, int out_w, int out_h) {
  if (out_h < lg.h || out_w < lg.w || out_h % lg.h != 0 || out_w % lg.w != 0)
    throw ShapeError("labels: output size must be a multiple of the grid");
  ByteImage img(out_w, out_h);
  const int sy = out_h / lg.h, sx = out_w / lg.w;
  for (int i = 0; i < lg.h; ++i)
    for (int j = 0; j < lg.w; ++j) {
      const double* p = lg.at(i, j);
      int best = 0;
      for (int ch = 1; ch < lg.l; ++ch)
        if (p[ch] > p[best]) best = ch;
      for (int y = i * sy; y < (i + 1) * sy; ++y)
        for (int x = j * sx; x < (j + 1) * sx; ++x)
          img.at(x, y) = static_cast<uint8_t>(best);
    }
  return img;
}

std::vector<Point> decode_keypoints(const LabelGrid& lg, int img_w, int img_h) {
  std::vector<Point> out(static_cast<size_t>(lg.l));
  const double sy = static_cast<double>(img_h) / lg.h;
  const double sx = static_cast<double>(img_w) / lg.w;
  for (int ch = 0; ch < lg.l; ++ch) {
    int bi = 0, bj = 0;
    double best = -1.0;
    for (int i = 0; i < lg.h; ++i)
      for (int j = 0; j < lg.w; ++j)
        if (lg.at(i, j)[ch] > best) {
          best = lg.at(i, j)[ch];
          bi = i;
          bj = j;
        }
    out[static_cast<size_t>(ch)] = {(bj + 0.5) * sx, (bi + 0.5) * sy};
  }
  return out;
}

double metric_j(const ByteImage& pred, const ByteImage& gt) {
  if (pred.w != gt.w || pred.h != gt.h) throw ShapeError("metric: mask size mismatch");
  long inter = 0, uni = 0;
  for (size_t i = 0; i < pred.px.size(); ++i) {
    const bool p = pred.px[i] != 0, g = gt.px[i] != 0;
    inter += (p && g);
    uni += (p || g);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

int default_f_tolerance(int w, int h) {
  return static_cast<int>(
      std::ceil(0.008 * std::sqrt(static_cast<double>(w) * w + static_cast<double>(h) * h)));
}

namespace {

// 1-px boundary: mask pixels with a 4-neighbor outside the mask or the frame.
std::vector<uint8_t> boundary_of(const ByteImage& m) {
  std::vector<uint8_t> b(m.px.size(), 0);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      if (!m.at(x, y)) continue;
      const bool edge = x == 0 || y == 0 || x == m.w - 1 || y == m.h - 1 || !m.at(x - 1, y) ||
                        !m.at(x + 1, y) || !m.at(x, y - 1) || !m.at(x, y + 1);
      b[static_cast<size_t>(y) * m.w + x] = edge;
    }
  return b;
}

std::vector<uint8_t> dilate_chebyshev(const std::vector<uint8_t>& b, int w, int h, int tol) {
  std::vector<uint8_t> d(b.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!b[static_cast<size_t>(y) * w + x]) continue;
      for (int dy = -tol; dy <= tol; ++dy)
        for (int dx = -tol; dx <= tol; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny >= 0 && ny < h && nx >= 0 && nx < w) d[static_cast<size_t>(ny) * w + nx] = 1;
        }
    }
  return d;
}

}  // namespace

double metric_f(const ByteImage& pred, const ByteImage& gt, int tol_px) {
  if (pred.w != gt.w || pred.h != gt.h) throw ShapeError("metric: mask size mismatch");
  if (tol_px < 0) throw ConfigError("metric: tolerance must be >= 0");
  const auto pb = boundary_of(pred);
  const auto gb = boundary_of(gt);
  long np = 0, ng = 0;
  for (uint8_t v : pb) np += v;
  for (uint8_t v : gb) ng += v;
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const auto pd = dilate_chebyshev(pb, pred.w, pred.h, tol_px);
  const auto gd = dilate_chebyshev(gb, pred.w, pred.h, tol_px);
  long phit = 0, ghit = 0;
  for (size_t i = 0; i < pb.size(); ++i) {
    phit += (pb[i] && gd[i]);
    ghit += (gb[i] && pd[i]);
  }
  const double precision = static_cast<double>(phit) / static_cast<double>(np);
  const double recall = static_cast<double>(ghit) / static_cast<double>(ng);
  return (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

double metric_pck(const std::vector<Point>& pred, const std::vector<Point>& gt, double alpha,
                  double ref_size) {
  if (pred.size() != gt.size()) throw ShapeError("metric: keypoint count mismatch");
  if (!(alpha > 0.0) || !(ref_size > 0.0))
    throw ConfigError("metric: alpha and ref_size must be > 0");
  if (pred.empty()) return 1.0;
  long hit = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i].x - gt[i].x, dy = pred[i].y - gt[i].y;
    hit += (std::sqrt(dx * dx + dy * dy) <= alpha * ref_size);
  }
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

ByteImage affinity_heatmap(const FeatureMap& source, int si, int sj, const FeatureMap& target) {
  if (si < 0 || si >= source.h || sj < 0 || sj >= source.w)
    throw ShapeError("heatmap: source cell out of range");
  if (source.c != target.c) throw ShapeError("heatmap: channel mismatch");
  const FeatureMap s = l2_normalize_cells(source);
  const FeatureMap t = l2_normalize_cells(target);
  std::vector<double> sims(static_cast<size_t>(target.h) * target.w);
  const double* sv = s.at(si, sj);
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < target.h; ++i)
    for (int j = 0; j < target.w; ++j) {
      double dot = 0.0;
      for (int ch = 0; ch < target.c; ++ch) dot += sv[ch] * t.at(i, j)[ch];
      sims[static_cast<size_t>(i) * target.w + j] = dot;
      lo = std::min(lo, dot);
      hi = std::max(hi, dot);
    }
  ByteImage img(target.w, target.h);
  if (hi - lo < 1e-12) {
    std::fill(img.px.begin(), img.px.end(), static_cast<uint8_t>(128));
    return img;
  }
  for (size_t i = 0; i < sims.size(); ++i)
    img.px[i] = static_cast<uint8_t>(std::lround((sims[i] - lo) / (hi - lo) * 255.0));
  return img;
}

}  // namespace sfc
