#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sfc/errors.hpp"
#include "sfc/rng.hpp"

namespace sfc {

// Axis-aligned crop of a source frame together with the feature-grid layout of
// the encoded view. Maps feature cells back to source-frame pixel coordinates,
// including the horizontal mirror for flipped views.
struct CropGeometry {
  int src_w = 0, src_h = 0;    // source frame size, px
  int x0 = 0, y0 = 0;          // crop top-left, px
  int w = 0, h = 0;            // crop size, px
  bool flipped = false;        // horizontal mirror applied after cropping
  int out_size = 0;            // resized view side, px
  int grid_h = 0, grid_w = 0;  // feature grid of the encoded view

  double cell_w() const { return static_cast<double>(w) / grid_w; }
  double cell_h() const { return static_cast<double>(h) / grid_h; }
  // Mean pixel spacing between adjacent cell centers of this view.
  double mean_spacing() const { return 0.5 * (cell_w() + cell_h()); }
  // Source-frame coordinates (x, y) of the center of grid cell (i, j).
  std::pair<double, double> cell_center(int i, int j) const;
};

// Binary matching mask between the cells of two views of the same frame.
// Rows index view-A cells, columns view-B cells, both flattened as
// i * grid_w + j.
struct PositiveMask {
  int rows = 0, cols = 0;
  std::vector<uint8_t> m;
  double r = 0;  // matching radius in normalized cell units

  uint8_t at(int a, int b) const { return m[static_cast<size_t>(a) * cols + b]; }
  long count() const;
};

// Samples a crop whose area fraction of the frame is uniform in [g1, g2] and
// whose aspect ratio is log-uniform in [aspect_lo, aspect_hi]. After
// max_tries failed placements, falls back to the whole frame.
CropGeometry sample_crop(int src_w, int src_h, double g1, double g2, double aspect_lo,
                         double aspect_hi, int out_size, int grid, Rng& rng,
                         int max_tries = 10);

// Fraction of the smaller crop's area covered by the boxes' intersection.
double overlap_fraction(const CropGeometry& a, const CropGeometry& b);

// Cell pair (a, b) is positive when the source-frame centers are within
// r * s pixels, s being the geometric mean of the two views' mean cell
// spacings. With identical geometries and r < 1 this is the identity mask.
PositiveMask build_positive_mask(const CropGeometry& a, const CropGeometry& b, double r);

struct ViewPairGeometry {
  CropGeometry a, b;
  PositiveMask mask;
  int resamples = 0;      // whole-pair retries because the mask came up empty
  bool fallback = false;  // pair was replaced by identical full-frame crops
};

// Draws two crops of one frame and their positive mask. Pairs with an empty
// mask are redrawn up to max_tries times, then replaced by identical
// full-frame crops, which always yields a non-empty (diagonal) mask.
ViewPairGeometry sample_view_pair_geometry(int src_w, int src_h, double g1, double g2,
                                           double aspect_lo, double aspect_hi, int out_size,
                                           int grid, double r, bool flip_enabled, Rng& rng,
                                           int max_tries = 10);

}  // namespace sfc
