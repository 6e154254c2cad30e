#pragma once

#include <string>
#include <vector>

#include "vtr/corpus.hpp"
#include "vtr/loss.hpp"
#include "vtr/optim.hpp"

namespace vtr::train {

struct TrainConfig {
  double lambda = 0.5;
  int k = 3;
  int epochs = 200;
  int batch_size = 16;
  double base_lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double grad_clip = 1.0;  // global norm; 0 disables
  double warmup_frac = 0.1;  // linear ramp before the cosine decay
  std::uint64_t seed = 7;
  int threads = 1;  // per-item forward/backward workers within a batch
  int eval_every = 1;
  bool early_stop_train_r1 = false;
  int train_r1_every = 10;
};

struct BatchItem {
  const model::VideoClip* clip = nullptr;
  model::TokenSequence tokens;
  std::uint64_t pool_stream = 0;  // stream id for the k-subsampling rng
};

struct BatchLoss {
  double total = 0.0, con = 0.0, cap = 0.0;
};

// One batch objective, forward only. Deterministic given cfg.seed and the
// items' pool streams; used as the finite-difference oracle target.
BatchLoss batch_forward(const model::Model& m, const std::vector<BatchItem>& items,
                        const TrainConfig& cfg, const model::TokenWeightTable& table);

// Forward plus backward. Per-item passes run on independent tapes (possibly
// across cfg.threads workers); leaf gradients are reduced in item order into
// the parameters' grad buffers, so results do not depend on thread count.
BatchLoss batch_backward(model::Model& m, const std::vector<BatchItem>& items,
                         const TrainConfig& cfg, const model::TokenWeightTable& table);

struct SplitMetrics {
  double r1_t2v = 0.0, r1_v2t = 0.0;
};

// Retrieval R@1 on a corpus split under the model's configured fusion head.
SplitMetrics eval_split_r1(const model::Model& m, const data::Corpus& corpus,
                           const std::vector<int>& ids);

struct EpochLog {
  int epoch = 0;
  double l_con = 0.0, l_cap = 0.0, lr = 0.0;
  double r1_t2v = 0.0, r1_v2t = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::string checkpoint_path;
  int steps = 0;
  bool early_stopped = false;
};

// Seeded, deterministic loop: shuffle, batch, backward, clip, AdamW with
// cosine decay, logit-scale clamp; per-epoch metrics append to
// <out_dir>/metrics.jsonl and the final model goes to
// <out_dir>/checkpoint_final.ckpt (out_dir empty: nothing is written).
TrainResult train(model::Model& m, const data::Corpus& corpus,
                  const TrainConfig& cfg, const std::string& out_dir);

}  // namespace vtr::train
