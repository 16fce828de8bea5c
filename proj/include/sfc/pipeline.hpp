#pragma once

#include <vector>

#include "sfc/config.hpp"
#include "sfc/data.hpp"
#include "sfc/encoder.hpp"
#include "sfc/fusion.hpp"
#include "sfc/propagation.hpp"

namespace sfc {

// Dense features of one full frame through the online backbone, eval-mode BN,
// no stat updates. Frame sides must be divisible by the total stride.
FeatureMap encode_frame(EncoderPair& pair, const Tensor& frame);
std::vector<FeatureMap> encode_video_frames(EncoderPair& pair,
                                            const std::vector<Tensor>& frames);

// Per-frame late fusion of two encodings of the same video.
std::vector<FeatureMap> fuse_video_features(const std::vector<FeatureMap>& semantic,
                                            const std::vector<FeatureMap>& fine, double lambda);

// One-hot label grid marking the cell containing each keypoint (one channel
// per keypoint).
LabelGrid keypoints_to_labels(const std::vector<Point>& kps, int grid_h, int grid_w, int img_w,
                              int img_h);

struct PropagationOutput {
  std::vector<LabelGrid> grids;
  std::vector<ByteImage> masks;  // per-frame argmax decodes at full resolution
};

PropagationOutput propagate_segmentation(const std::vector<FeatureMap>& feats,
                                         const ByteImage& first_mask, int num_classes,
                                         const PropagationConfig& cfg);

// Segmentation quality of predicted vs ground-truth mask videos: per-class
// J/F averaged over classes, then frames 1..T-1 (frame 0 is the given input).
struct VideoScores {
  double j = 0, f = 0, jf = 0;
  std::vector<double> j_per_frame, f_per_frame;
};

VideoScores score_segmentation(const std::vector<ByteImage>& pred,
                               const std::vector<ByteImage>& gt, int num_classes);

struct PckScores {
  double at_01 = 0, at_02 = 0;
};

// Propagates frame-0 keypoints through the video and scores PCK against the
// ground-truth tracks, averaged over frames 1..T-1.
PckScores score_keypoints(const std::vector<FeatureMap>& feats, const VideoData& video,
                          const PropagationConfig& cfg);

// Whole-benchmark numbers: per video, propagate the first-frame mask (fused
// encoding when `semantic` is given) and average all metrics across videos.
struct BenchmarkScores {
  double j = 0, f = 0, jf = 0, pck01 = 0, pck02 = 0;
};

BenchmarkScores evaluate_videos(EncoderPair& fine, EncoderPair* semantic, double lambda,
                                const std::vector<VideoData>& videos,
                                const PropagationConfig& cfg);

}  // namespace sfc
