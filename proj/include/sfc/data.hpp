#pragma once

#include <string>
#include <vector>

#include "sfc/augment.hpp"
#include "sfc/image_io.hpp"
#include "sfc/propagation.hpp"
#include "sfc/rng.hpp"
#include "sfc/tensor.hpp"

namespace sfc {

// A moving textured sprite. Center travels (cx + vx*t, cy + vy*t); masks and
// keypoints are computed from this geometry directly, never from pixels.
struct SpriteSpec {
  enum class Kind { kDisc, kRect };
  Kind kind = Kind::kDisc;
  double cx = 0, cy = 0;  // center at frame 0, px
  double w = 0, h = 0;    // full extents; discs require w == h
  double vx = 0, vy = 0;  // px per frame
  uint64_t texture_seed = 0;
};

struct SceneSpec {
  int frame_w = 64, frame_h = 64;
  int frame_count = 24;
  uint64_t background_seed = 0;
  std::vector<SpriteSpec> sprites;

  void validate() const;
};

// One synthetic clip: frames in [0,1], per-pixel class masks (0 = background,
// sprite k gets class k+1, later sprites stacked on top), and per-frame
// keypoints (each sprite contributes centroid + 4 extremal points, in order).
struct VideoData {
  int w = 0, h = 0;
  int num_classes = 1;
  double ref_size = 0;  // largest sprite extent, the PCK reference scale
  std::vector<Tensor> frames;
  std::vector<ByteImage> masks;
  std::vector<std::vector<Point>> keypoints;
};

inline constexpr int kKeypointsPerSprite = 5;

VideoData generate_synthetic_video(const SceneSpec& spec, uint64_t seed);

// Draws sprite kinds, sizes, velocities and start positions such that every
// sprite stays fully inside the frame for the whole clip.
SceneSpec random_scene(int frame_w, int frame_h, int frame_count, int sprite_count, Rng& rng);

// Two augmented crops of one frame plus the cell-correspondence geometry.
struct ViewPair {
  Tensor view1, view2;
  ViewPairGeometry geom;
};

// Crop parameters come from geom_rng, photometric parameters from photo_rng,
// so augmentation flags never shift the sampled boxes.
ViewPair make_view_pair(const Tensor& image, double g1, double g2, const AugmentationSpec& aug,
                        int out_size, int grid, double r, Rng& geom_rng, Rng& photo_rng);

// Flat list of frames pooled across videos; temporal order is discarded.
struct FrameDataset {
  std::vector<Tensor> frames;

  static FrameDataset from_videos(const std::vector<VideoData>& videos);
  static FrameDataset load(const std::string& root);
};

// Uniform with-replacement index sampler, deterministic per seed.
class BatchIterator {
 public:
  BatchIterator(size_t dataset_size, int batch_size, uint64_t seed);
  std::vector<size_t> next();

 private:
  size_t n_;
  int batch_;
  Rng rng_;
};

// Directory layout: <root>/videoNNN/frameNNNNN.ppm, masks under labels/ as
// PGM, keypoints.txt rows "frame_idx kp_idx x y".
void save_video(const std::string& dir, const VideoData& video);
VideoData load_video(const std::string& dir);
std::vector<std::string> list_videos(const std::string& root);

// Keypoint tracks of "frame_idx kp_idx x y" rows; per-frame indices must be
// sequential from zero.
std::vector<std::vector<Point>> read_keypoints(const std::string& path, size_t frame_count);
void write_keypoints(const std::string& path, const std::vector<std::vector<Point>>& kps);

}  // namespace sfc
