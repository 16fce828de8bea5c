// Command-line front end. Every command reads the same flat key=value
// configuration; training writes self-describing checkpoints that the
// propagation and diagnostic commands restore without the original file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfc/checkpoint.hpp"
#include "sfc/config.hpp"
#include "sfc/data.hpp"
#include "sfc/gradcheck_suites.hpp"
#include "sfc/pipeline.hpp"
#include "sfc/trainer.hpp"

namespace fs = std::filesystem;

using namespace sfc;

namespace {

constexpr double kGradTol = 1e-4;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  f << text;
  if (!f) throw DataError("'" + path.string() + "': write failed");
}

std::string frame_file(size_t t) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame%05zu.pgm", t);
  return name;
}

// defaults -> --config file -> --set overrides, later wins.
Config resolve_config(Config base, const std::string& path,
                      const std::vector<std::string>& sets) {
  Config cfg = path.empty() ? std::move(base) : load_config(path, std::move(base));
  for (const std::string& kv : sets) apply_override(cfg, kv);
  return cfg;
}

struct TrainOpts {
  std::string config_path, data_root, out_dir;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool grad_check = false;
};

void run_composed_gradcheck(TrainMode mode, uint64_t seed, double alpha) {
  const GradCheckReport rep = mode == TrainMode::kSemantic
                                  ? semantic_loss_grad_check(seed)
                                  : dense_loss_grad_check(alpha, seed);
  std::printf("gradient check: max rel err %.3g at %s[%zu] over %ld probes\n",
              rep.max_rel_err, rep.worst_param.c_str(), rep.worst_index, rep.evaluated);
  if (!(rep.max_rel_err < kGradTol))
    throw NumericError("gradient check failed: " + rep.worst_param + " rel err " +
                       std::to_string(rep.max_rel_err));
}

void run_train(TrainMode mode, const TrainOpts& o, bool seed_given) {
  Config base = mode == TrainMode::kSemantic ? semantic_defaults() : Config{};
  Config cfg = resolve_config(std::move(base), o.config_path, o.sets);
  if (seed_given) cfg.seed = o.seed;
  validate_config(cfg);
  if (o.grad_check)
    run_composed_gradcheck(mode, cfg.seed, mode == TrainMode::kFc ? 0.0 : cfg.loss_alpha);

  const FrameDataset data = FrameDataset::load(o.data_root);
  std::printf("training on %zu frames from %s\n", data.frames.size(), o.data_root.c_str());
  Trainer trainer(cfg, mode, data);

  fs::create_directories(o.out_dir);
  std::ofstream csv(fs::path(o.out_dir) / "loss.csv", std::ios::trunc);
  csv << "step,total,local,global,positives,skipped\n";
  for (int s = 1; s <= cfg.opt_steps; ++s) {
    const LossReport rep = trainer.step();
    if (rep.step % cfg.opt_log_every == 0 || rep.step == cfg.opt_steps) {
      char row[192];
      std::snprintf(row, sizeof(row), "%ld,%.8g,%.8g,%.8g,%ld,%ld\n", rep.step, rep.total,
                    rep.local, rep.global, rep.positives, rep.skipped);
      csv << row;
      std::printf("step %ld/%d  total %.5f  local %.5f  global %.5f\n", rep.step,
                  cfg.opt_steps, rep.total, rep.local, rep.global);
      std::fflush(stdout);
    }
  }
  if (!csv) throw DataError("'" + o.out_dir + "/loss.csv': write failed");
  csv.close();

  save_checkpoint((fs::path(o.out_dir) / "checkpoint.sfck").string(),
                  trainer.make_checkpoint());
  write_text(fs::path(o.out_dir) / "config.txt", serialize_config(cfg));
  std::printf("done: %ld steps (%ld skipped), checkpoint in %s\n", trainer.steps_done(),
              trainer.skipped(), o.out_dir.c_str());
}

struct PropOpts {
  std::string ckpt, ckpt_semantic, video_dir, out_dir;
  std::vector<std::string> sets;
  bool allow_mismatch = false;
};

void run_propagate(const PropOpts& o) {
  Config cfg;
  EncoderPair fine = encoder_from_checkpoint(load_checkpoint(o.ckpt), &cfg);
  std::optional<EncoderPair> sem;
  const bool fused = !o.ckpt_semantic.empty();
  if (fused) {
    Config sem_cfg;
    sem.emplace(encoder_from_checkpoint(load_checkpoint(o.ckpt_semantic), &sem_cfg));
    if (!o.allow_mismatch && arch_hash(cfg) != arch_hash(sem_cfg))
      throw ConfigError(
          "propagate: the two checkpoints use different architectures; "
          "pass --allow-mismatch to fuse them anyway");
  }
  for (const std::string& kv : o.sets) apply_override(cfg, kv);
  validate_config(cfg);

  const VideoData video = load_video(o.video_dir);
  std::vector<FeatureMap> feats = encode_video_frames(fine, video.frames);
  if (fused)
    feats = fuse_video_features(encode_video_frames(*sem, video.frames), feats,
                                cfg.prop_lambda);

  const int grid = std::max(feats[0].h, feats[0].w);
  PropagationConfig pcfg{resolved_top_k(cfg, fused), cfg.prop_m,
                         resolved_radius(cfg, fused, grid), cfg.prop_tau};
  pcfg.validate();

  const PropagationOutput seg =
      propagate_segmentation(feats, video.masks[0], video.num_classes, pcfg);

  // Keypoint tracks ride along when the source video carries them.
  std::vector<std::vector<Point>> tracks;
  if (!video.keypoints.empty() && !video.keypoints[0].empty()) {
    const LabelGrid first =
        keypoints_to_labels(video.keypoints[0], feats[0].h, feats[0].w, video.w, video.h);
    for (const LabelGrid& lg : propagate_video(feats, first, pcfg))
      tracks.push_back(decode_keypoints(lg, video.w, video.h));
  }

  fs::create_directories(o.out_dir);
  for (size_t t = 0; t < seg.masks.size(); ++t)
    write_pgm((fs::path(o.out_dir) / frame_file(t)).string(), seg.masks[t]);
  if (!tracks.empty())
    write_keypoints((fs::path(o.out_dir) / "keypoints.txt").string(), tracks);
  write_text(fs::path(o.out_dir) / "config.txt", serialize_config(cfg));
  std::printf("propagated %zu frames on a %dx%d grid (top_k %d, radius %d) to %s\n",
              seg.masks.size(), feats[0].h, feats[0].w, pcfg.top_k, pcfg.radius,
              o.out_dir.c_str());
}

struct EvalOpts {
  std::string pred, gt, metric = "jf", report;
};

void run_eval(const EvalOpts& o) {
  if (o.metric != "jf" && o.metric != "pck")
    throw ConfigError("eval: unknown metric '" + o.metric + "' (expected jf or pck)");
  const VideoData gtv = load_video(o.gt);
  const size_t frames = gtv.frames.size();
  std::string csv;

  if (o.metric == "jf") {
    std::vector<ByteImage> pred;
    for (size_t t = 0; t < frames; ++t) {
      const fs::path p = fs::path(o.pred) / frame_file(t);
      if (!fs::exists(p))
        throw DataError("'" + p.string() + "': missing predicted frame " + std::to_string(t));
      pred.push_back(read_pgm(p.string()));
    }
    const VideoScores s = score_segmentation(pred, gtv.masks, gtv.num_classes);
    csv = "frame,j,f\n";
    for (size_t i = 0; i < s.j_per_frame.size(); ++i) {
      char row[96];
      std::snprintf(row, sizeof(row), "%zu,%.8g,%.8g\n", i + 1, s.j_per_frame[i],
                    s.f_per_frame[i]);
      csv += row;
    }
    char mean[96];
    std::snprintf(mean, sizeof(mean), "mean,%.8g,%.8g\n", s.j, s.f);
    csv += mean;
    std::printf("J %.4f  F %.4f  J&F %.4f over %zu frames\n", s.j, s.f, s.jf, frames - 1);
  } else {
    if (gtv.keypoints.empty() || gtv.keypoints[0].empty())
      throw DataError("'" + o.gt + "': no ground-truth keypoints");
    const auto pred = read_keypoints(o.pred + "/keypoints.txt", frames);
    csv = "frame,pck01,pck02\n";
    double p1 = 0, p2 = 0;
    for (size_t t = 1; t < frames; ++t) {
      const double a = metric_pck(pred[t], gtv.keypoints[t], 0.1, gtv.ref_size);
      const double b = metric_pck(pred[t], gtv.keypoints[t], 0.2, gtv.ref_size);
      char row[96];
      std::snprintf(row, sizeof(row), "%zu,%.8g,%.8g\n", t, a, b);
      csv += row;
      p1 += a;
      p2 += b;
    }
    p1 /= static_cast<double>(frames - 1);
    p2 /= static_cast<double>(frames - 1);
    char mean[96];
    std::snprintf(mean, sizeof(mean), "mean,%.8g,%.8g\n", p1, p2);
    csv += mean;
    std::printf("PCK@0.1 %.4f  PCK@0.2 %.4f (ref size %.1f)\n", p1, p2, gtv.ref_size);
  }
  if (!o.report.empty()) write_text(o.report, csv);
}

struct SynthOpts {
  std::string out;
  int videos = 8, frames = 24, size = 64, sprites = 2;
  uint64_t seed = 1;
};

void run_synth(const SynthOpts& o) {
  if (o.videos < 1) throw ConfigError("synth: videos must be >= 1");
  Rng rng = make_stream(o.seed, kStreamScene);
  fs::create_directories(o.out);
  for (int i = 0; i < o.videos; ++i) {
    const SceneSpec spec = random_scene(o.size, o.size, o.frames, o.sprites, rng);
    const uint64_t render_seed = rng();
    char name[32];
    std::snprintf(name, sizeof(name), "video%03d", i);
    save_video((fs::path(o.out) / name).string(),
               generate_synthetic_video(spec, render_seed));
  }
  std::printf("wrote %d videos (%dx%d, %d frames, %d sprites each) to %s\n", o.videos,
              o.size, o.size, o.frames, o.sprites, o.out.c_str());
}

struct GradcheckOpts {
  int cases = 100;
  uint64_t seed = 1;
};

void run_gradcheck(const GradcheckOpts& o) {
  if (o.cases < 1) throw ConfigError("gradcheck: cases must be >= 1");
  double worst = 0.0;
  std::string worst_op;
  auto note = [&](const std::string& op, double err) {
    std::printf("%-24s %.3g\n", op.c_str(), err);
    if (err > worst) {
      worst = err;
      worst_op = op;
    }
  };
  for (const auto& [op, err] : op_gradient_suite(o.cases, o.seed)) note(op, err);
  note("loss[fine]", dense_loss_grad_check(0.0, o.seed).max_rel_err);
  note("loss[joint]", dense_loss_grad_check(1.0, o.seed).max_rel_err);
  note("loss[semantic]", semantic_loss_grad_check(o.seed).max_rel_err);
  std::printf("worst: %s at %.3g (tolerance %g)\n", worst_op.c_str(), worst, kGradTol);
  if (!(worst < kGradTol))
    throw NumericError("gradient check failed: " + worst_op + " rel err " +
                       std::to_string(worst));
}

struct HeatmapOpts {
  std::string ckpt, video_dir, out;
  int source = 0, target = -1, row = -1, col = -1;
};

void run_heatmap(const HeatmapOpts& o) {
  EncoderPair enc = encoder_from_checkpoint(load_checkpoint(o.ckpt));
  const VideoData video = load_video(o.video_dir);
  const int frames = static_cast<int>(video.frames.size());
  const int dst = o.target < 0 ? frames - 1 : o.target;
  if (o.source < 0 || o.source >= frames || dst < 0 || dst >= frames)
    throw ConfigError("dump-heatmap: frame index out of range");
  const FeatureMap src = encode_frame(enc, video.frames[o.source]);
  const FeatureMap tgt = encode_frame(enc, video.frames[dst]);
  const int si = o.row < 0 ? src.h / 2 : o.row;
  const int sj = o.col < 0 ? src.w / 2 : o.col;
  if (si >= src.h || sj >= src.w) throw ConfigError("dump-heatmap: cell out of range");
  write_pgm(o.out, affinity_heatmap(src, si, sj, tgt));
  std::printf("similarity of frame %d cell (%d,%d) against frame %d -> %s\n", o.source, si,
              sj, dst, o.out.c_str());
}

void add_train_command(CLI::App& app, const char* name, const char* desc, TrainMode mode) {
  CLI::App* cmd = app.add_subcommand(name, desc);
  auto o = std::make_shared<TrainOpts>();
  cmd->add_option("--config", o->config_path, "configuration file");
  cmd->add_option("--data", o->data_root, "dataset root directory")->required();
  cmd->add_option("--out", o->out_dir, "output directory")->required();
  cmd->add_option("--set", o->sets, "key=value override, applied after --config");
  CLI::Option* seed = cmd->add_option("--seed", o->seed, "seed override, wins over --set");
  cmd->add_flag("--grad-check", o->grad_check, "verify gradients before training");
  cmd->callback([o, seed, mode] { run_train(mode, *o, seed->count() > 0); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense correspondence trainer and video label propagator"};
  app.require_subcommand(1);

  add_train_command(app, "train-fc", "train the fine-grained objective", TrainMode::kFc);
  add_train_command(app, "train-semantic", "train the contrastive objective",
                    TrainMode::kSemantic);
  add_train_command(app, "train-joint", "train the joint objective", TrainMode::kJoint);

  auto po = std::make_shared<PropOpts>();
  CLI::App* prop = app.add_subcommand("propagate", "propagate first-frame labels");
  prop->add_option("--ckpt", po->ckpt, "checkpoint")->required();
  prop->add_option("--ckpt-semantic", po->ckpt_semantic,
                   "second checkpoint; enables late fusion");
  prop->add_option("--video", po->video_dir, "video directory")->required();
  prop->add_option("--out", po->out_dir, "output directory")->required();
  prop->add_option("--set", po->sets, "key=value override of the stored configuration");
  prop->add_flag("--allow-mismatch", po->allow_mismatch,
                 "fuse checkpoints with different architectures");
  prop->callback([po] { run_propagate(*po); });

  auto eo = std::make_shared<EvalOpts>();
  CLI::App* ev = app.add_subcommand("eval", "score predictions against ground truth");
  ev->add_option("--pred", eo->pred, "prediction directory")->required();
  ev->add_option("--gt", eo->gt, "ground-truth video directory")->required();
  ev->add_option("--metric", eo->metric, "jf or pck");
  ev->add_option("--report", eo->report, "per-frame CSV output path");
  ev->callback([eo] { run_eval(*eo); });

  auto so = std::make_shared<SynthOpts>();
  CLI::App* sy = app.add_subcommand("synth", "generate a synthetic dataset");
  sy->add_option("--out", so->out, "dataset root directory")->required();
  sy->add_option("--videos", so->videos, "number of videos");
  sy->add_option("--frames", so->frames, "frames per video");
  sy->add_option("--size", so->size, "frame side length");
  sy->add_option("--sprites", so->sprites, "sprites per video");
  sy->add_option("--seed", so->seed, "generator seed");
  sy->callback([so] { run_synth(*so); });

  auto go = std::make_shared<GradcheckOpts>();
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gc->add_option("--cases", go->cases, "random cases per operation");
  gc->add_option("--seed", go->seed, "sweep seed");
  gc->callback([go] { run_gradcheck(*go); });

  auto ho = std::make_shared<HeatmapOpts>();
  CLI::App* hm = app.add_subcommand("dump-heatmap", "write one cell's similarity map");
  hm->add_option("--ckpt", ho->ckpt, "checkpoint")->required();
  hm->add_option("--video", ho->video_dir, "video directory")->required();
  hm->add_option("--out", ho->out, "output PGM path")->required();
  hm->add_option("--source", ho->source, "source frame index");
  hm->add_option("--target", ho->target, "target frame index (default: last)");
  hm->add_option("--row", ho->row, "source cell row (default: center)");
  hm->add_option("--col", ho->col, "source cell column (default: center)");
  hm->callback([ho] { run_heatmap(*ho); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
