#include "sfc/trainer.hpp"

#include <cmath>

namespace sfc {

namespace {

std::vector<uint32_t> u32_dims(const std::vector<int>& shape) {
  std::vector<uint32_t> d;
  for (int x : shape) d.push_back(static_cast<uint32_t>(x));
  return d;
}

std::vector<int> int_dims(const std::vector<uint32_t>& dims) {
  std::vector<int> d;
  for (uint32_t x : dims) d.push_back(static_cast<int>(x));
  return d;
}

void pack_store(Checkpoint& ckpt, const std::string& prefix, const ParamStore& store) {
  for (const auto& [name, t] : store.params)
    ckpt.put_f32(prefix + "." + name, t.ptr(), u32_dims(t.shape));
  for (const auto& [name, s] : store.bn) {
    ckpt.put_f32(prefix + ".stats." + name + ".mean", s.mean.ptr(), u32_dims(s.mean.shape));
    ckpt.put_f32(prefix + ".stats." + name + ".var", s.var.ptr(), u32_dims(s.var.shape));
  }
}

void unpack_tensor(const Checkpoint& ckpt, const std::string& name, Tensor& t) {
  const CheckpointEntry& e = ckpt.at(name);
  if (int_dims(e.dims) != t.shape)
    throw DataError("checkpoint: entry '" + name + "' has shape mismatch");
  const std::vector<float> v = ckpt.f32(name);
  std::copy(v.begin(), v.end(), t.data.begin());
}

void unpack_store(const Checkpoint& ckpt, const std::string& prefix, ParamStore& store) {
  for (auto& [name, t] : store.params) unpack_tensor(ckpt, prefix + "." + name, t);
  for (auto& [name, s] : store.bn) {
    unpack_tensor(ckpt, prefix + ".stats." + name + ".mean", s.mean);
    unpack_tensor(ckpt, prefix + ".stats." + name + ".var", s.var);
  }
}

}  // namespace

Trainer::Trainer(const Config& cfg, TrainMode mode, const FrameDataset& data)
    : cfg_(cfg),
      mode_(mode),
      data_(data),
      batches_(data.frames.size(), cfg.opt_batch, cfg.seed),
      geom_(make_stream(cfg.seed, kStreamGeometry)),
      photo_(make_stream(cfg.seed, kStreamPhotometric)) {
  validate_config(cfg_);
  const bool global_heads = mode != TrainMode::kFc;
  pair_ = init_encoder_pair<float>(cfg_.backbone, cfg_.head, global_heads, cfg_.seed);
  if (mode == TrainMode::kSemantic)
    queue_ = std::make_unique<NegativeQueueT<float>>(cfg_.loss_queue, cfg_.head.out_dim,
                                                     cfg_.seed);
  for (const Tensor& f : data_.frames)
    if (f.shape.size() != 3 || f.shape[0] != 3)
      throw DataError("trainer: dataset frames must be [3,H,W]");
}

LossReport Trainer::step() {
  const int n = cfg_.opt_batch;
  const int s = cfg_.backbone.input_size;
  const int grid = cfg_.backbone.grid();

  const std::vector<size_t> idx = batches_.next();
  Tensor v1({n, 3, s, s}), v2({n, 3, s, s});
  std::vector<PositiveMask> masks;
  const size_t view_len = static_cast<size_t>(3) * s * s;
  for (int i = 0; i < n; ++i) {
    ViewPair vp = make_view_pair(data_.frames[idx[static_cast<size_t>(i)]], cfg_.crop_g1,
                                 cfg_.crop_g2, cfg_.aug, s, grid, cfg_.loss_r, geom_, photo_);
    std::copy(vp.view1.data.begin(), vp.view1.data.end(), v1.data.begin() + i * view_len);
    std::copy(vp.view2.data.begin(), vp.view2.data.end(), v2.data.begin() + i * view_len);
    masks.push_back(std::move(vp.geom.mask));
  }

  LossReport rep;
  rep.step = step_ + 1;

  Graph g;
  BoundEncoderT<float> online(g, pair_.online, pair_.backbone, pair_.head, true);
  BoundEncoderT<float> target(g, pair_.target, pair_.backbone, pair_.head, false);
  const int x1 = g.constant(v1, "view1");
  const int x2 = g.constant(v2, "view2");

  int loss = -1;
  try {
    if (mode_ == TrainMode::kSemantic) {
      auto built = build_semantic_loss(g, online, target, x1, x2, *queue_,
                                       static_cast<float>(cfg_.loss_tau), BnMode::kTrain, true);
      loss = built.loss;
      rep.total = static_cast<double>(scalar_of(g.value(built.loss)));
      check_infonce_bound(rep.total);
      g.backward(loss);
      adam_step(pair_.online.params, online.collect_grads(), adam_,
                AdamConfig{static_cast<float>(cfg_.opt_lr)});
      queue_->enqueue_rows(g.value(built.z2));
    } else {
      const float alpha =
          mode_ == TrainMode::kJoint ? static_cast<float>(cfg_.loss_alpha) : 0.0f;
      auto built = build_dense_loss(g, online, target, x1, x2, masks, alpha,
                                    cfg_.loss_symmetrize, BnMode::kTrain, true);
      loss = built.loss;
      rep.total = static_cast<double>(scalar_of(g.value(built.loss)));
      rep.local = static_cast<double>(scalar_of(g.value(built.local)));
      rep.positives = built.positives;
      check_cosine_loss_bound(rep.local, "local loss");
      if (built.global_term >= 0) {
        rep.global = static_cast<double>(scalar_of(g.value(built.global_term)));
        check_cosine_loss_bound(rep.global, "global loss");
      }
      g.backward(loss);
      adam_step(pair_.online.params, online.collect_grads(), adam_,
                AdamConfig{static_cast<float>(cfg_.opt_lr)});
    }
  } catch (const EmptyMaskError&) {
    ++skipped_;
    ++step_;
    rep.total = rep.local = rep.global = 0.0;
    rep.skipped = skipped_;
    return rep;
  }

  // The contrastive mode keeps a constant key momentum: ramping it to 1 would
  // freeze the key encoder and push the loss back toward chance late in
  // training. The regression modes anneal it so the targets settle.
  const double m = mode_ == TrainMode::kSemantic
                       ? cfg_.opt_ema_m0
                       : ema_schedule(adam_.step, std::max(1, cfg_.opt_steps), cfg_.opt_ema_m0);
  ema_update(pair_, m);
  ++step_;
  rep.skipped = skipped_;
  return rep;
}

void Trainer::run(long steps, std::vector<LossReport>* log) {
  for (long i = 0; i < steps; ++i) {
    LossReport rep = step();
    if (log) log->push_back(rep);
  }
}

Checkpoint Trainer::make_checkpoint() const {
  return pack_train_state(cfg_, pair_, adam_, step_, skipped_);
}

Checkpoint pack_train_state(const Config& cfg, const EncoderPair& pair, const AdamState& adam,
                            long steps_done, long skipped) {
  Checkpoint ckpt;
  const std::string text = serialize_config(cfg);
  ckpt.config_hash = fnv1a(text);
  ckpt.put_u8("config", reinterpret_cast<const uint8_t*>(text.data()),
              {static_cast<uint32_t>(text.size())});
  pack_store(ckpt, "online", pair.online);
  pack_store(ckpt, "target", pair.target);
  for (const auto& [name, t] : adam.m)
    ckpt.put_f32("adam.m." + name, t.ptr(), u32_dims(t.shape));
  for (const auto& [name, t] : adam.v)
    ckpt.put_f32("adam.v." + name, t.ptr(), u32_dims(t.shape));
  const int64_t counters[3] = {adam.step, steps_done, skipped};
  ckpt.put_i64("adam.step", counters, {1});
  ckpt.put_i64("train.steps", counters + 1, {1});
  ckpt.put_i64("train.skipped", counters + 2, {1});
  return ckpt;
}

EncoderPair encoder_from_checkpoint(const Checkpoint& ckpt, Config* out_cfg) {
  const std::vector<uint8_t> raw = ckpt.u8("config");
  const std::string text(raw.begin(), raw.end());
  if (fnv1a(text) != ckpt.config_hash)
    throw DataError("checkpoint: stored config does not match its hash");
  const Config cfg = parse_config(text);
  const bool global_heads = ckpt.find("online.gproj.conv0.weight") != nullptr;
  EncoderPair pair = init_encoder_pair<float>(cfg.backbone, cfg.head, global_heads, cfg.seed);
  unpack_store(ckpt, "online", pair.online);
  unpack_store(ckpt, "target", pair.target);
  if (out_cfg) *out_cfg = cfg;
  return pair;
}

}  // namespace sfc
