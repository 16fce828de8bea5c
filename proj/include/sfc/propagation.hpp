#pragma once

#include <vector>

#include "sfc/fusion.hpp"
#include "sfc/image_io.hpp"

namespace sfc {

// Per-cell label distributions: class posteriors for segmentation (cell rows
// sum to 1) or one spatial distribution per keypoint channel.
struct LabelGrid {
  int h = 0, w = 0, l = 0;
  std::vector<double> v;

  LabelGrid() = default;
  LabelGrid(int h_, int w_, int l_) : h(h_), w(w_), l(l_) {
    if (h_ < 1 || w_ < 1 || l_ < 1) throw ShapeError("label grid: invalid dims");
    v.assign(static_cast<size_t>(h_) * w_ * l_, 0.0);
  }
  double* at(int i, int j) { return v.data() + (static_cast<size_t>(i) * w + j) * l; }
  const double* at(int i, int j) const {
    return v.data() + (static_cast<size_t>(i) * w + j) * l;
  }
};

struct PropagationConfig {
  int top_k = 10;
  int context_m = 20;
  int radius = 12;      // Chebyshev, in feature-grid cells
  double tau = 0.07;

  void validate() const {
    if (top_k < 1) throw ConfigError("propagation: top_k must be >= 1");
    if (context_m < 0) throw ConfigError("propagation: context_m must be >= 0");
    if (radius < 0) throw ConfigError("propagation: radius must be >= 0");
    if (!(tau > 0.0)) throw ConfigError("propagation: tau must be > 0");
  }
};

struct AffinityCandidate {
  int frame, row, col;
  double w;
};

// Per query cell: exp((cos - rowmax)/tau) over all context cells within the
// radius, candidates listed in (frame, row, col) order.
struct SparseAffinity {
  int h = 0, w = 0;
  std::vector<std::vector<AffinityCandidate>> rows;
};

SparseAffinity restricted_affinity(const FeatureMap& query,
                                   const std::vector<const FeatureMap*>& context, int radius,
                                   double tau);

// Keeps the top_k heaviest candidates per cell (ties to the lowest
// (frame, row, col)), renormalizes them, and blends the context labels.
LabelGrid propagate_frame(const SparseAffinity& aff,
                          const std::vector<const LabelGrid*>& context_labels, int top_k);

// Context frame indices for frame t: {0} plus the m preceding frames.
std::vector<int> context_frames(int t, int m);

// Recurrent propagation: frame 0 returns first_labels verbatim, later frames
// blend labels of frame 0 and the m preceding (already predicted) frames.
std::vector<LabelGrid> propagate_video(const std::vector<FeatureMap>& frames,
                                       const LabelGrid& first_labels,
                                       const PropagationConfig& cfg);

// Soft labels from a class-index image: per cell, the fraction of its pixels
// carrying each class.
LabelGrid labels_from_image(const ByteImage& classes, int grid_h, int grid_w, int num_classes);

// Per-cell argmax (ties to the lowest class), nearest-neighbor upsampled.
ByteImage labels_to_image(const LabelGrid& lg, int out_w, int out_h);

struct Point {
  double x = 0.0, y = 0.0;
};

// Argmax cell center of each channel, in image coordinates.
std::vector<Point> decode_keypoints(const LabelGrid& lg, int img_w, int img_h);

// Region similarity |pred ∩ gt| / |pred ∪ gt| of nonzero pixels; 1 when both
// masks are empty.
double metric_j(const ByteImage& pred, const ByteImage& gt);

// ceil(0.8% of the image diagonal).
int default_f_tolerance(int w, int h);

// Boundary F-measure: precision/recall of 1-px boundaries matched within a
// Chebyshev tolerance.
double metric_f(const ByteImage& pred, const ByteImage& gt, int tol_px);

// Fraction of keypoints within alpha * ref_size (Euclidean).
double metric_pck(const std::vector<Point>& pred, const std::vector<Point>& gt, double alpha,
                  double ref_size);

// Cosine similarity of every target cell to one source cell, min-max scaled
// to [0,255]; a constant map degenerates to mid-gray.
ByteImage affinity_heatmap(const FeatureMap& source, int si, int sj, const FeatureMap& target);

}  // namespace sfc
