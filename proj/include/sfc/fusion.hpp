#pragma once

#include <vector>

#include "sfc/tensor.hpp"

namespace sfc {

// Dense per-cell feature grid, cell-major with channels last.
struct FeatureMap {
  int h = 0, w = 0, c = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int h_, int w_, int c_) : h(h_), w(w_), c(c_) {
    if (h_ < 1 || w_ < 1 || c_ < 1)
      throw ShapeError("feature map: invalid dims " + std::to_string(h_) + "x" +
                       std::to_string(w_) + "x" + std::to_string(c_));
    data.assign(static_cast<size_t>(h_) * w_ * c_, 0.0);
  }

  double* at(int i, int j) { return data.data() + (static_cast<size_t>(i) * w + j) * c; }
  const double* at(int i, int j) const {
    return data.data() + (static_cast<size_t>(i) * w + j) * c;
  }
  int cells() const { return h * w; }

  // Extracts one sample of a [N,C,H,W] batch.
  template <typename T>
  static FeatureMap from_tensor(const TensorT<T>& t, int sample) {
    if (t.rank() != 4) throw ShapeError("feature map: expected [N,C,H,W], got " + shape_str(t.shape));
    if (sample < 0 || sample >= t.dim(0))
      throw ShapeError("feature map: sample index out of range");
    FeatureMap out(t.dim(2), t.dim(3), t.dim(1));
    const size_t plane = static_cast<size_t>(out.h) * out.w;
    const T* base = t.ptr() + static_cast<size_t>(sample) * out.c * plane;
    for (int ch = 0; ch < out.c; ++ch)
      for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j)
          out.at(i, j)[ch] = static_cast<double>(base[ch * plane + static_cast<size_t>(i) * out.w + j]);
    return out;
  }
};

// Resamples to a new grid; sample points sit at cell centers, edges clamp.
FeatureMap bilinear_resize(const FeatureMap& src, int out_h, int out_w);

// Unit-normalizes each cell vector; all-zero cells stay zero.
FeatureMap l2_normalize_cells(const FeatureMap& src);

// Concatenation [L2Norm(semantic), lambda * L2Norm(fine)] per cell.
struct FusedFeatureMap {
  FeatureMap map;
  int c_semantic = 0, c_fine = 0;
  double lambda = 0.0;
};

// Fuses a semantic and a fine-grained map. When the grids disagree, the
// coarser map is resampled to the finer grid before normalization.
FusedFeatureMap fuse_feature_maps(const FeatureMap& f_s, const FeatureMap& f_f, double lambda);

// Cosine similarities between one re-normalized query cell and every cell of
// the context map, row-major. For cells whose halves are unit / lambda-norm,
// this equals (sim_s + lambda^2 * sim_f) / (1 + lambda^2).
std::vector<double> fused_affinity(const FusedFeatureMap& q, int qi, int qj,
                                   const FusedFeatureMap& ctx);

}  // namespace sfc
