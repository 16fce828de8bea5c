#include "sfc/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sfc {

namespace {

float sample_clamped(const Tensor& img, int c, double y, double x) {
  const int h = img.shape[1], w = img.shape[2];
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) {
    yy = std::clamp(yy, 0, h - 1);
    xx = std::clamp(xx, 0, w - 1);
    return static_cast<double>(img.data[(static_cast<size_t>(c) * h + yy) * w + xx]);
  };
  const double top = px(y0, x0) * (1 - fx) + px(y0, x0 + 1) * fx;
  const double bot = px(y0 + 1, x0) * (1 - fx) + px(y0 + 1, x0 + 1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

void clamp_unit(Tensor& view) {
  for (float& v : view.data) v = std::clamp(v, 0.0f, 1.0f);
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0.0;
  if (d <= 0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = 2.0 + (b - r) / d;
  else
    h = 4.0 + (r - g) / d;
  h /= 6.0;
  if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int i = std::min(5, static_cast<int>(hh));
  const double f = hh - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

}  // namespace

Tensor render_view(const Tensor& image, const CropGeometry& geom) {
  if (image.shape.size() != 3 || image.shape[0] != 3)
    throw ShapeError("render_view: expected [3,H,W] image");
  if (image.shape[1] != geom.src_h || image.shape[2] != geom.src_w)
    throw ShapeError("render_view: image size does not match crop geometry");
  const int out = geom.out_size;
  Tensor view({3, out, out});
  const double sx = static_cast<double>(geom.w) / out;
  const double sy = static_cast<double>(geom.h) / out;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out; ++y)
      for (int x = 0; x < out; ++x) {
        const int xx = geom.flipped ? out - 1 - x : x;
        const double srcx = geom.x0 + (xx + 0.5) * sx - 0.5;
        const double srcy = geom.y0 + (y + 0.5) * sy - 0.5;
        view.data[(static_cast<size_t>(c) * out + y) * out + x] =
            sample_clamped(image, c, srcy, srcx);
      }
  return view;
}

void adjust_brightness(Tensor& view, double factor) {
  for (float& v : view.data) v = static_cast<float>(v * factor);
  clamp_unit(view);
}

void adjust_contrast(Tensor& view, double factor) {
  const size_t plane = view.data.size() / 3;
  double mean = 0;
  for (size_t i = 0; i < plane; ++i)
    mean += luma(view.data[i], view.data[plane + i], view.data[2 * plane + i]);
  mean /= static_cast<double>(plane);
  for (float& v : view.data) v = static_cast<float>((v - mean) * factor + mean);
  clamp_unit(view);
}

void adjust_saturation(Tensor& view, double factor) {
  const size_t plane = view.data.size() / 3;
  for (size_t i = 0; i < plane; ++i) {
    const double g = luma(view.data[i], view.data[plane + i], view.data[2 * plane + i]);
    for (int c = 0; c < 3; ++c) {
      float& v = view.data[c * plane + i];
      v = static_cast<float>(g + (v - g) * factor);
    }
  }
  clamp_unit(view);
}

void shift_hue(Tensor& view, double offset) {
  const size_t plane = view.data.size() / 3;
  for (size_t i = 0; i < plane; ++i) {
    double h, s, v, r, g, b;
    rgb_to_hsv(view.data[i], view.data[plane + i], view.data[2 * plane + i], h, s, v);
    hsv_to_rgb(h + offset, s, v, r, g, b);
    view.data[i] = static_cast<float>(r);
    view.data[plane + i] = static_cast<float>(g);
    view.data[2 * plane + i] = static_cast<float>(b);
  }
  clamp_unit(view);
}

void gaussian_blur(Tensor& view, double sigma) {
  if (!(sigma > 0)) throw ConfigError("gaussian_blur: sigma must be positive");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(radius) + 1);
  double norm = 0;
  for (int i = 0; i <= radius; ++i) {
    k[i] = std::exp(-0.5 * (i / sigma) * (i / sigma));
    norm += i == 0 ? k[i] : 2 * k[i];
  }
  for (double& v : k) v /= norm;
  const int h = view.shape[1], w = view.shape[2];
  const size_t plane = static_cast<size_t>(h) * w;
  std::vector<float> tmp(plane);
  for (int c = 0; c < 3; ++c) {
    float* p = view.data.data() + c * plane;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int d = -radius; d <= radius; ++d)
          acc += k[std::abs(d)] * p[static_cast<size_t>(y) * w + std::clamp(x + d, 0, w - 1)];
        tmp[static_cast<size_t>(y) * w + x] = static_cast<float>(acc);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int d = -radius; d <= radius; ++d)
          acc += k[std::abs(d)] * tmp[static_cast<size_t>(std::clamp(y + d, 0, h - 1)) * w + x];
        p[static_cast<size_t>(y) * w + x] = static_cast<float>(acc);
      }
  }
}

void to_grayscale(Tensor& view) {
  const size_t plane = view.data.size() / 3;
  for (size_t i = 0; i < plane; ++i) {
    const float g = static_cast<float>(
        luma(view.data[i], view.data[plane + i], view.data[2 * plane + i]));
    view.data[i] = view.data[plane + i] = view.data[2 * plane + i] = g;
  }
}

void apply_photometrics(Tensor& view, const AugmentationSpec& aug, Rng& rng) {
  aug.validate();
  auto draw = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  if (aug.color_jitter && draw(0, 1) < aug.jitter_prob) {
    const double s = aug.jitter_strength;
    adjust_brightness(view, draw(1.0 - s, 1.0 + s));
    adjust_contrast(view, draw(1.0 - s, 1.0 + s));
    adjust_saturation(view, draw(1.0 - s, 1.0 + s));
    shift_hue(view, draw(-s / 4.0, s / 4.0));
  }
  if (aug.blur && draw(0, 1) < aug.blur_prob)
    gaussian_blur(view, draw(aug.blur_sigma_lo, aug.blur_sigma_hi));
  if (aug.grayscale && draw(0, 1) < aug.grayscale_prob) to_grayscale(view);
}

}  // namespace sfc
