#pragma once

#include "vtr/text.hpp"

namespace vtr::model {

// Train-time decoder: masked self-attention over the shifted caption and
// cross-attention over the aggregated prompt vectors. Dropped at inference.
struct DecoderLayerWeights {
  Tensor ln1_g, ln1_b;
  core::MhaWeights self_attn;
  Tensor ln2_g, ln2_b;
  core::MhaWeights cross_attn;
  Tensor ln3_g, ln3_b;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
};

struct CaptionHeadWeights {
  Tensor tok_emb;  // [V, D]
  Tensor pos_emb;  // [max_len, D]
  std::vector<DecoderLayerWeights> layers;  // M blocks
  Tensor lnf_g, lnf_b;
  Tensor out_w, out_b;  // [D, V], [V]
  int heads = 4;
  std::int64_t max_len = 12;
};

CaptionHeadWeights init_caption_head(int vocab_size, std::int64_t dim, int heads,
                                     int layers, std::int64_t max_len, Rng rng);

// Per-vocabulary-id loss weight. `normalized` is prenorm scaled so the
// largest weight is 1; reserved PAD/BOS are forced to 0.
struct TokenWeightTable {
  std::vector<double> normalized;
  std::vector<double> prenorm;  // log(N_docs / df), before max-scaling

  double weight(int id) const { return normalized[static_cast<std::size_t>(id)]; }
};

// Binary-TF document-frequency IDF over the training captions. A token in
// every caption weighs exactly 0; a token absent from the corpus gets the
// maximum prenorm value.
TokenWeightTable tfidf_weights(const std::vector<TokenSequence>& corpus,
                               const Vocabulary& vocab);

enum class TfidfMode { weight, mask };

struct CaptionLossResult {
  Tensor loss;
  bool all_weights_zero = false;
};

// Teacher-forced next-token loss: position l predicts token l+1, each
// position's cross entropy scaled by the weight of its target token, then
// weight-sum-normalized. `mask` mode replaces weights by 0/1 indicators.
// out_logits, when given, receives the [len-1, V] next-token logits.
CaptionLossResult caption_loss(const TokenSequence& tokens, const Tensor& prompts,
                               const CaptionHeadWeights& head,
                               const TokenWeightTable& table,
                               TfidfMode mode = TfidfMode::weight,
                               Tensor* out_logits = nullptr);

}  // namespace vtr::model
