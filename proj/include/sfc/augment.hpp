#pragma once

#include "sfc/geometry.hpp"
#include "sfc/rng.hpp"
#include "sfc/tensor.hpp"

namespace sfc {

// Photometric switches on top of the always-on crop. Defaults mean crop-only;
// jitter strengths follow the usual 0.4/0.4/0.4/0.1 recipe (hue = strength/4).
struct AugmentationSpec {
  bool hflip = false;
  bool color_jitter = false;
  double jitter_strength = 0.4;
  double jitter_prob = 0.8;
  bool blur = false;
  double blur_sigma_lo = 0.1, blur_sigma_hi = 2.0;
  double blur_prob = 0.5;
  bool grayscale = false;
  double grayscale_prob = 0.2;

  bool operator==(const AugmentationSpec&) const = default;

  void validate() const {
    if (jitter_strength < 0.0 || jitter_strength >= 1.0)
      throw ConfigError("augment: jitter strength must be in [0,1)");
    for (double p : {jitter_prob, blur_prob, grayscale_prob})
      if (p < 0.0 || p > 1.0) throw ConfigError("augment: probabilities must be in [0,1]");
    if (!(blur_sigma_lo > 0.0) || blur_sigma_hi < blur_sigma_lo)
      throw ConfigError("augment: invalid blur sigma range");
  }
};

// Crops, optionally mirrors, and resizes one [3,H,W] image to [3,out,out]
// by bilinear sampling at output pixel centers (edge clamp).
Tensor render_view(const Tensor& image, const CropGeometry& geom);

// In-place color jitter / blur / grayscale with parameters drawn from rng.
// Consumes rng only for the ops whose flags are on; geometry draws live on a
// separate stream, so flags never perturb crop boxes.
void apply_photometrics(Tensor& view, const AugmentationSpec& aug, Rng& rng);

// Helpers exposed for direct testing.
void adjust_brightness(Tensor& view, double factor);
void adjust_contrast(Tensor& view, double factor);
void adjust_saturation(Tensor& view, double factor);
void shift_hue(Tensor& view, double offset);  // offset in turns, [-0.5, 0.5]
void gaussian_blur(Tensor& view, double sigma);
void to_grayscale(Tensor& view);

}  // namespace sfc
