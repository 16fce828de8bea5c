#pragma once

#include <memory>
#include <vector>

#include "sfc/adam.hpp"
#include "sfc/checkpoint.hpp"
#include "sfc/config.hpp"
#include "sfc/data.hpp"
#include "sfc/loss_graph.hpp"

namespace sfc {

enum class TrainMode { kFc, kSemantic, kJoint };

// One optimizer loop: sample a batch of frames, build two views of each,
// assemble the mode's loss graph, backprop, Adam-update the online store, and
// EMA-update the target on the cosine momentum schedule. Batches whose
// positive masks come up empty are skipped and counted, never trained on.
class Trainer {
 public:
  Trainer(const Config& cfg, TrainMode mode, const FrameDataset& data);

  LossReport step();
  void run(long steps, std::vector<LossReport>* log = nullptr);

  Checkpoint make_checkpoint() const;

  const EncoderPair& pair() const { return pair_; }
  EncoderPair& pair() { return pair_; }
  long steps_done() const { return step_; }
  long skipped() const { return skipped_; }

 private:
  Config cfg_;
  TrainMode mode_;
  const FrameDataset& data_;
  EncoderPair pair_;
  AdamState adam_;
  std::unique_ptr<NegativeQueueT<float>> queue_;
  BatchIterator batches_;
  Rng geom_, photo_;
  long step_ = 0, skipped_ = 0;
};

// Checkpoint layout shared by all commands: the serialized config as a byte
// entry, online/target parameters and BN statistics, Adam moments, and the
// step counters. config_hash is the hash of the stored config text.
Checkpoint pack_train_state(const Config& cfg, const EncoderPair& pair, const AdamState& adam,
                            long steps_done, long skipped);

// Rebuilds an encoder pair (shapes from the stored config) and fills every
// parameter and BN statistic from the checkpoint. Entry mismatches are data
// errors. Returns the stored config through out_cfg when given.
EncoderPair encoder_from_checkpoint(const Checkpoint& ckpt, Config* out_cfg = nullptr);

}  // namespace sfc
