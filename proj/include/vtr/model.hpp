#pragma once

#include "vtr/aggregate.hpp"
#include "vtr/caption.hpp"
#include "vtr/checkpoint.hpp"
#include "vtr/text.hpp"

namespace vtr::model {

// Training-time temporal fusion head. `mean` is the default text-agnostic
// path; the others condition pooling on the text and are trained jointly
// when selected.
enum class PoolingKind { mean, attention, topk, xpool };

PoolingKind pooling_from_name(const std::string& name);
const char* pooling_name(PoolingKind kind);

struct ModelConfig {
  std::int64_t image_size = 32;
  std::int64_t patch = 8;
  std::int64_t dim = 64;
  int heads = 4;
  int layers = 4;
  std::int64_t nf = 6;
  int text_layers = 2;
  std::int64_t max_len = 12;
  int cap_layers = 3;
  int vocab_size = 0;

  bool use_cube = true;
  bool use_aggregation = true;
  bool use_caption = true;
  TfidfMode tfidf_mode = TfidfMode::weight;
  PoolingKind pooling = PoolingKind::mean;
  int topk_kprime = 3;

  void validate() const;
};

// Single-head text-conditioned pooling projections, trained jointly when
// pooling == xpool.
struct XPoolWeights {
  Tensor wq, wk, wv, wo;  // [D, D] each
};

struct Model {
  ModelConfig cfg;
  EncoderWeights video;
  AggregationWeights agg;
  TextEncoderWeights text;
  CaptionHeadWeights caption;
  Tensor logit_scale;  // [1]; 1/tau = exp(logit_scale), clamped <= 100
  XPoolWeights xpool;

  // Stable named parameter registry (checkpoint order).
  std::vector<core::NamedTensor> named_parameters();
  std::vector<Tensor> parameters();
};

Model init_model(const ModelConfig& cfg, std::uint64_t seed);

void save_model(const std::string& path, Model& model);
Model load_model(const std::string& path);

// --- forward paths ---

// Per-frame prompt vectors for one clip at the model's configured Nf.
// With aggregation off this is the plain LN(CLS) readout.
Tensor frame_prompts(const Model& m, const VideoClip& clip);

// Full video representation. Training requires clip.nf == cfg.nf and uses
// k-subsampled pooling; inference accepts cfg.nf (single chunk) or
// 2*cfg.nf frames (interval-sampled chunking).
Tensor video_repr(const Model& m, const VideoClip& clip, int k, bool training,
                  Rng* rng);

// Interval sampling: parity 0 keeps frames {0,2,4,...}, parity 1 keeps
// {1,3,5,...}.
VideoClip interval_chunk(const VideoClip& clip, int parity);

// Exactly-12-frame path at Nf=6: even-index chunk + odd-index chunk, both
// aggregated, all prompt vectors pooled together.
Tensor chunked_inference(const Model& m, const VideoClip& clip);

// Frame prompt matrix used by cross-modal fusion heads at eval time:
// single chunk -> [Nf,D], double chunk -> [2Nf,D].
Tensor eval_frame_prompts(const Model& m, const VideoClip& clip);

// Clamp 1/tau to <= 100 (applied after each optimizer step).
void clamp_logit_scale(Model& m);

}  // namespace vtr::model
