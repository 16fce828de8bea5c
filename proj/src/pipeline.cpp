#include "sfc/pipeline.hpp"

#include <cmath>

#include "sfc/loss_graph.hpp"

namespace sfc {

FeatureMap encode_frame(EncoderPair& pair, const Tensor& frame) {
  if (frame.shape.size() != 3 || frame.shape[0] != 3)
    throw ShapeError("encode_frame: expected [3,H,W]");
  Graph g;
  BoundEncoderT<float> enc(g, pair.online, pair.backbone, pair.head, false);
  Tensor batched({1, 3, frame.shape[1], frame.shape[2]});
  batched.data = frame.data;
  const int x = g.constant(batched, "frame");
  const int f = enc.backbone(x, BnMode::kEval, false);
  return FeatureMap::from_tensor(g.value(f), 0);
}

std::vector<FeatureMap> encode_video_frames(EncoderPair& pair,
                                            const std::vector<Tensor>& frames) {
  std::vector<FeatureMap> out;
  out.reserve(frames.size());
  for (const Tensor& f : frames) out.push_back(encode_frame(pair, f));
  return out;
}

std::vector<FeatureMap> fuse_video_features(const std::vector<FeatureMap>& semantic,
                                            const std::vector<FeatureMap>& fine,
                                            double lambda) {
  if (semantic.size() != fine.size())
    throw ShapeError("fuse: videos have different frame counts");
  std::vector<FeatureMap> out;
  out.reserve(fine.size());
  for (size_t t = 0; t < fine.size(); ++t)
    out.push_back(fuse_feature_maps(semantic[t], fine[t], lambda).map);
  return out;
}

LabelGrid keypoints_to_labels(const std::vector<Point>& kps, int grid_h, int grid_w, int img_w,
                              int img_h) {
  if (kps.empty()) throw ConfigError("keypoints_to_labels: no keypoints");
  LabelGrid lg(grid_h, grid_w, static_cast<int>(kps.size()));
  const double cw = static_cast<double>(img_w) / grid_w;
  const double ch = static_cast<double>(img_h) / grid_h;
  for (size_t k = 0; k < kps.size(); ++k) {
    const int j = std::clamp(static_cast<int>(std::floor(kps[k].x / cw)), 0, grid_w - 1);
    const int i = std::clamp(static_cast<int>(std::floor(kps[k].y / ch)), 0, grid_h - 1);
    lg.at(i, j)[k] = 1.0;
  }
  return lg;
}

PropagationOutput propagate_segmentation(const std::vector<FeatureMap>& feats,
                                         const ByteImage& first_mask, int num_classes,
                                         const PropagationConfig& cfg) {
  if (feats.empty()) throw ConfigError("propagate: no frames");
  PropagationOutput out;
  const LabelGrid first =
      labels_from_image(first_mask, feats[0].h, feats[0].w, num_classes);
  out.grids = propagate_video(feats, first, cfg);
  out.masks.reserve(out.grids.size());
  for (const LabelGrid& gl : out.grids)
    out.masks.push_back(labels_to_image(gl, first_mask.w, first_mask.h));
  return out;
}

namespace {

ByteImage class_mask(const ByteImage& m, uint8_t cls) {
  ByteImage out(m.w, m.h, 0);
  for (size_t i = 0; i < m.px.size(); ++i) out.px[i] = m.px[i] == cls ? 1 : 0;
  return out;
}

}  // namespace

VideoScores score_segmentation(const std::vector<ByteImage>& pred,
                               const std::vector<ByteImage>& gt, int num_classes) {
  if (pred.size() != gt.size() || pred.size() < 2)
    throw ShapeError("score: need equal-length videos of at least two frames");
  if (num_classes < 2) throw ConfigError("score: need at least one foreground class");
  VideoScores vs;
  const int tol = default_f_tolerance(gt[0].w, gt[0].h);
  for (size_t t = 1; t < pred.size(); ++t) {
    double j = 0, f = 0;
    for (int cls = 1; cls < num_classes; ++cls) {
      const ByteImage pm = class_mask(pred[t], static_cast<uint8_t>(cls));
      const ByteImage gm = class_mask(gt[t], static_cast<uint8_t>(cls));
      j += metric_j(pm, gm);
      f += metric_f(pm, gm, tol);
    }
    vs.j_per_frame.push_back(j / (num_classes - 1));
    vs.f_per_frame.push_back(f / (num_classes - 1));
    vs.j += vs.j_per_frame.back();
    vs.f += vs.f_per_frame.back();
  }
  const double frames = static_cast<double>(pred.size() - 1);
  vs.j /= frames;
  vs.f /= frames;
  vs.jf = 0.5 * (vs.j + vs.f);
  return vs;
}

PckScores score_keypoints(const std::vector<FeatureMap>& feats, const VideoData& video,
                          const PropagationConfig& cfg) {
  if (feats.size() != video.frames.size())
    throw ShapeError("score: feature/frame count mismatch");
  if (video.keypoints.empty() || video.keypoints[0].empty())
    throw ConfigError("score: video has no keypoints");
  const LabelGrid first =
      keypoints_to_labels(video.keypoints[0], feats[0].h, feats[0].w, video.w, video.h);
  const std::vector<LabelGrid> grids = propagate_video(feats, first, cfg);
  PckScores ps;
  for (size_t t = 1; t < grids.size(); ++t) {
    const std::vector<Point> pred = decode_keypoints(grids[t], video.w, video.h);
    ps.at_01 += metric_pck(pred, video.keypoints[t], 0.1, video.ref_size);
    ps.at_02 += metric_pck(pred, video.keypoints[t], 0.2, video.ref_size);
  }
  const double frames = static_cast<double>(grids.size() - 1);
  ps.at_01 /= frames;
  ps.at_02 /= frames;
  return ps;
}

BenchmarkScores evaluate_videos(EncoderPair& fine, EncoderPair* semantic, double lambda,
                                const std::vector<VideoData>& videos,
                                const PropagationConfig& cfg) {
  if (videos.empty()) throw DataError("evaluate: no videos");
  BenchmarkScores bs;
  for (const VideoData& v : videos) {
    std::vector<FeatureMap> feats = encode_video_frames(fine, v.frames);
    if (semantic) {
      const std::vector<FeatureMap> sem = encode_video_frames(*semantic, v.frames);
      feats = fuse_video_features(sem, feats, lambda);
    }
    const PropagationOutput prop =
        propagate_segmentation(feats, v.masks[0], v.num_classes, cfg);
    const VideoScores vs = score_segmentation(prop.masks, v.masks, v.num_classes);
    bs.j += vs.j;
    bs.f += vs.f;
    const PckScores ps = score_keypoints(feats, v, cfg);
    bs.pck01 += ps.at_01;
    bs.pck02 += ps.at_02;
  }
  const double n = static_cast<double>(videos.size());
  bs.j /= n;
  bs.f /= n;
  bs.jf = 0.5 * (bs.j + bs.f);
  bs.pck01 /= n;
  bs.pck02 /= n;
  return bs;
}

}  // namespace sfc
