#include "sfc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sfc {

namespace fs = std::filesystem;

namespace {

uint64_t mix64(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (b * 0x9e3779b97f4a7c15ULL);
  return splitmix64(s);
}

// Hash-lattice value noise in [0,1]; pure function of position and seed.
double lattice(int64_t ix, int64_t iy, uint64_t seed) {
  uint64_t k = mix64(seed, static_cast<uint64_t>(ix) * 0x8cb92ba72f3d8dd7ULL);
  k = mix64(k, static_cast<uint64_t>(iy) * 0xd1b54a32d192ed03ULL);
  return static_cast<double>(k >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double x, double y, uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
  const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
  const double a = lattice(ix, iy, seed), b = lattice(ix + 1, iy, seed);
  const double c = lattice(ix, iy + 1, seed), d = lattice(ix + 1, iy + 1, seed);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

// Four octaves, base wavelength 16 px, weights 8:4:2:1.
double fractal_noise(double x, double y, uint64_t seed) {
  double acc = 0, wsum = 0, w = 8, freq = 1.0 / 16.0;
  for (int o = 0; o < 4; ++o) {
    acc += w * value_noise(x * freq, y * freq, mix64(seed, 0x100 + o));
    wsum += w;
    w *= 0.5;
    freq *= 2.0;
  }
  return acc / wsum;
}

struct SpriteState {
  double cx, cy;
};

SpriteState sprite_at(const SpriteSpec& s, int t) {
  return {s.cx + s.vx * t, s.cy + s.vy * t};
}

bool covers(const SpriteSpec& s, const SpriteState& st, double px, double py) {
  const double u = px - st.cx, v = py - st.cy;
  if (s.kind == SpriteSpec::Kind::kDisc) {
    const double r = 0.5 * s.w;
    return u * u + v * v <= r * r;
  }
  return std::abs(u) <= 0.5 * s.w && std::abs(v) <= 0.5 * s.h;
}

void sprite_color(const SpriteSpec& s, double u, double v, double rgb[3]) {
  for (int c = 0; c < 3; ++c) {
    const double base =
        0.25 + 0.5 * lattice(static_cast<int64_t>(c), 7, mix64(s.texture_seed, 0xb45e));
    const double tex = value_noise(u / 6.0, v / 6.0, mix64(s.texture_seed, c)) +
                       0.5 * value_noise(u / 3.0, v / 3.0, mix64(s.texture_seed, 0x10 + c));
    rgb[c] = std::clamp(base + 0.3 * (tex / 1.5 - 0.5), 0.0, 1.0);
  }
}

}  // namespace

void SceneSpec::validate() const {
  if (frame_w < 1 || frame_h < 1) throw ConfigError("scene: frame size must be positive");
  if (frame_count < 1) throw ConfigError("scene: need at least one frame");
  for (size_t k = 0; k < sprites.size(); ++k) {
    const SpriteSpec& s = sprites[k];
    if (!(s.w > 0) || !(s.h > 0)) throw ConfigError("scene: sprite extents must be positive");
    if (s.kind == SpriteSpec::Kind::kDisc && s.w != s.h)
      throw ConfigError("scene: disc sprites require w == h");
    if (s.w > frame_w || s.h > frame_h)
      throw ConfigError("scene: sprite " + std::to_string(k) + " larger than frame");
    for (int t = 0; t < frame_count; ++t) {
      const SpriteState st = sprite_at(s, t);
      const double x0 = std::max(st.cx - 0.5 * s.w, 0.0);
      const double x1 = std::min(st.cx + 0.5 * s.w, static_cast<double>(frame_w));
      const double y0 = std::max(st.cy - 0.5 * s.h, 0.0);
      const double y1 = std::min(st.cy + 0.5 * s.h, static_cast<double>(frame_h));
      const double inside = std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0);
      if (inside < 0.5 * s.w * s.h)
        throw ConfigError("scene: sprite " + std::to_string(k) +
                          " leaves the frame at t=" + std::to_string(t));
    }
  }
}

VideoData generate_synthetic_video(const SceneSpec& spec, uint64_t seed) {
  spec.validate();
  const uint64_t bg_seed = mix64(seed, spec.background_seed);
  VideoData out;
  out.w = spec.frame_w;
  out.h = spec.frame_h;
  out.num_classes = static_cast<int>(spec.sprites.size()) + 1;
  for (const SpriteSpec& s : spec.sprites) out.ref_size = std::max({out.ref_size, s.w, s.h});

  for (int t = 0; t < spec.frame_count; ++t) {
    Tensor frame({3, spec.frame_h, spec.frame_w});
    ByteImage mask(spec.frame_w, spec.frame_h, 0);
    std::vector<SpriteState> states;
    for (const SpriteSpec& s : spec.sprites) states.push_back(sprite_at(s, t));

    const size_t plane = static_cast<size_t>(spec.frame_h) * spec.frame_w;
    for (int y = 0; y < spec.frame_h; ++y)
      for (int x = 0; x < spec.frame_w; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        int top = -1;
        for (int k = static_cast<int>(spec.sprites.size()) - 1; k >= 0; --k)
          if (covers(spec.sprites[k], states[k], px, py)) {
            top = k;
            break;
          }
        double rgb[3];
        if (top >= 0) {
          mask.at(x, y) = static_cast<uint8_t>(top + 1);
          sprite_color(spec.sprites[top], px - states[top].cx, py - states[top].cy, rgb);
        } else {
          for (int c = 0; c < 3; ++c)
            rgb[c] = 0.15 + 0.5 * fractal_noise(px, py, mix64(bg_seed, c));
        }
        const size_t i = static_cast<size_t>(y) * spec.frame_w + x;
        for (int c = 0; c < 3; ++c) frame.data[c * plane + i] = static_cast<float>(rgb[c]);
      }

    std::vector<Point> kps;
    for (size_t k = 0; k < spec.sprites.size(); ++k) {
      const SpriteSpec& s = spec.sprites[k];
      const SpriteState& st = states[k];
      kps.push_back({st.cx, st.cy});
      kps.push_back({st.cx - 0.5 * s.w, st.cy});
      kps.push_back({st.cx + 0.5 * s.w, st.cy});
      kps.push_back({st.cx, st.cy - 0.5 * s.h});
      kps.push_back({st.cx, st.cy + 0.5 * s.h});
    }

    out.frames.push_back(std::move(frame));
    out.masks.push_back(std::move(mask));
    out.keypoints.push_back(std::move(kps));
  }
  return out;
}

SceneSpec random_scene(int frame_w, int frame_h, int frame_count, int sprite_count, Rng& rng) {
  if (sprite_count < 1) throw ConfigError("random_scene: need at least one sprite");
  auto uni = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  SceneSpec spec;
  spec.frame_w = frame_w;
  spec.frame_h = frame_h;
  spec.frame_count = frame_count;
  spec.background_seed = rng();
  const double smin = std::min(frame_w, frame_h) / 6.0;
  const double smax = std::min(frame_w, frame_h) / 3.0;
  for (int k = 0; k < sprite_count; ++k) {
    SpriteSpec s;
    s.kind = (rng() & 1) ? SpriteSpec::Kind::kRect : SpriteSpec::Kind::kDisc;
    s.w = uni(smin, smax);
    s.h = s.kind == SpriteSpec::Kind::kDisc ? s.w : uni(smin, smax);
    const double span = std::max(1, frame_count - 1);
    const double vxm = std::min(2.0, 0.5 * (frame_w - s.w) / span);
    const double vym = std::min(2.0, 0.5 * (frame_h - s.h) / span);
    s.vx = uni(-vxm, vxm);
    s.vy = uni(-vym, vym);
    const double x_lo = 0.5 * s.w + std::max(0.0, -s.vx * span);
    const double x_hi = frame_w - 0.5 * s.w - std::max(0.0, s.vx * span);
    const double y_lo = 0.5 * s.h + std::max(0.0, -s.vy * span);
    const double y_hi = frame_h - 0.5 * s.h - std::max(0.0, s.vy * span);
    s.cx = uni(x_lo, x_hi);
    s.cy = uni(y_lo, y_hi);
    s.texture_seed = rng();
    spec.sprites.push_back(s);
  }
  return spec;
}

ViewPair make_view_pair(const Tensor& image, double g1, double g2, const AugmentationSpec& aug,
                        int out_size, int grid, double r, Rng& geom_rng, Rng& photo_rng) {
  aug.validate();
  if (image.shape.size() != 3 || image.shape[0] != 3)
    throw ShapeError("make_view_pair: expected [3,H,W] image");
  const int src_h = image.shape[1], src_w = image.shape[2];
  ViewPair vp;
  vp.geom = sample_view_pair_geometry(src_w, src_h, g1, g2, 3.0 / 4.0, 4.0 / 3.0, out_size,
                                      grid, r, aug.hflip, geom_rng);
  vp.view1 = render_view(image, vp.geom.a);
  vp.view2 = render_view(image, vp.geom.b);
  apply_photometrics(vp.view1, aug, photo_rng);
  apply_photometrics(vp.view2, aug, photo_rng);
  return vp;
}

FrameDataset FrameDataset::from_videos(const std::vector<VideoData>& videos) {
  FrameDataset ds;
  for (const VideoData& v : videos)
    for (const Tensor& f : v.frames) ds.frames.push_back(f);
  return ds;
}

FrameDataset FrameDataset::load(const std::string& root) {
  FrameDataset ds;
  for (const std::string& dir : list_videos(root)) {
    std::vector<fs::path> ppms;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".ppm") ppms.push_back(e.path());
    std::sort(ppms.begin(), ppms.end());
    for (const fs::path& p : ppms) ds.frames.push_back(tensor_from_rgb(read_ppm(p.string())));
  }
  return ds;
}

BatchIterator::BatchIterator(size_t dataset_size, int batch_size, uint64_t seed)
    : n_(dataset_size), batch_(batch_size), rng_(make_stream(seed, kStreamBatch)) {
  if (batch_size < 2) throw ConfigError("batch: batch_size must be at least 2");
  if (n_ == 0) throw DataError("batch: dataset is empty");
}

std::vector<size_t> BatchIterator::next() {
  std::vector<size_t> idx(static_cast<size_t>(batch_));
  std::uniform_int_distribution<size_t> d(0, n_ - 1);
  for (size_t& i : idx) i = d(rng_);
  return idx;
}

void save_video(const std::string& dir, const VideoData& video) {
  fs::create_directories(fs::path(dir) / "labels");
  char name[32];
  for (size_t t = 0; t < video.frames.size(); ++t) {
    std::snprintf(name, sizeof(name), "frame%05zu.ppm", t);
    write_ppm((fs::path(dir) / name).string(), rgb_from_tensor(video.frames[t]));
    std::snprintf(name, sizeof(name), "frame%05zu.pgm", t);
    write_pgm((fs::path(dir) / "labels" / name).string(), video.masks[t]);
  }
  write_keypoints((fs::path(dir) / "keypoints.txt").string(), video.keypoints);
}

void write_keypoints(const std::string& path, const std::vector<std::vector<Point>>& kps) {
  std::ofstream kf(path, std::ios::trunc);
  for (size_t t = 0; t < kps.size(); ++t)
    for (size_t k = 0; k < kps[t].size(); ++k) {
      char line[96];
      std::snprintf(line, sizeof(line), "%zu %zu %.17g %.17g\n", t, k, kps[t][k].x,
                    kps[t][k].y);
      kf << line;
    }
  if (!kf) throw DataError("'" + path + "': write failed");
}

std::vector<std::vector<Point>> read_keypoints(const std::string& path, size_t frame_count) {
  std::ifstream kf(path);
  if (!kf) throw DataError("'" + path + "': cannot open");
  std::vector<std::vector<Point>> out(frame_count);
  std::string line;
  size_t lineno = 0;
  while (std::getline(kf, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    size_t t, k;
    double x, y;
    if (!(ls >> t >> k >> x >> y))
      throw DataError("'" + path + "': bad keypoint line " + std::to_string(lineno));
    if (t >= out.size())
      throw DataError("'" + path + "': frame index out of range at line " +
                      std::to_string(lineno));
    if (out[t].size() != k)
      throw DataError("'" + path + "': non-sequential keypoint index at line " +
                      std::to_string(lineno));
    out[t].push_back({x, y});
  }
  return out;
}

VideoData load_video(const std::string& dir) {
  VideoData v;
  std::vector<fs::path> ppms;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") ppms.push_back(e.path());
  std::sort(ppms.begin(), ppms.end());
  if (ppms.empty()) throw DataError("'" + dir + "': no frames found");
  int max_class = 0;
  for (const fs::path& p : ppms) {
    Tensor frame = tensor_from_rgb(read_ppm(p.string()));
    v.frames.push_back(std::move(frame));
    const fs::path mp = fs::path(dir) / "labels" / p.filename().replace_extension(".pgm");
    ByteImage mask = read_pgm(mp.string());
    for (uint8_t c : mask.px) max_class = std::max(max_class, static_cast<int>(c));
    v.masks.push_back(std::move(mask));
  }
  v.w = v.masks[0].w;
  v.h = v.masks[0].h;
  v.num_classes = max_class + 1;

  const fs::path kp = fs::path(dir) / "keypoints.txt";
  if (fs::exists(kp))
    v.keypoints = read_keypoints(kp.string(), v.frames.size());
  else
    v.keypoints.assign(v.frames.size(), {});

  // PCK reference scale: largest bounding-box side of any class in frame 0.
  for (int cls = 1; cls < v.num_classes; ++cls) {
    int x0 = v.w, x1 = -1, y0 = v.h, y1 = -1;
    for (int y = 0; y < v.h; ++y)
      for (int x = 0; x < v.w; ++x)
        if (v.masks[0].at(x, y) == cls) {
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
        }
    if (x1 >= 0) v.ref_size = std::max({v.ref_size, double(x1 - x0 + 1), double(y1 - y0 + 1)});
  }
  return v;
}

std::vector<std::string> list_videos(const std::string& root) {
  if (!fs::is_directory(root)) throw DataError("'" + root + "': not a directory");
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && e.path().filename().string().rfind("video", 0) == 0)
      dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace sfc
