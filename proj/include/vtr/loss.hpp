#pragma once

#include "vtr/model.hpp"

namespace vtr::train {

using core::Tensor;

// Symmetric InfoNCE over the B x B cosine similarity matrix:
// (v2t + t2v) / 2, each direction a mean cross entropy against the
// diagonal. Rows of X and Y are re-normalized here; inv_tau is the
// (possibly learnable) 1-element logit scale tensor.
Tensor contrastive_loss(const Tensor& x, const Tensor& y, const Tensor& inv_tau);

// Similarity matrix S[i][j] = fusion(video i, text j) used by the training
// objective. `video_feats` is [B,D] pooled vectors for mean pooling and
// [B,Nf,D] frame prompts for the cross-modal heads. Rows of Y must be
// unit-norm already; X/frame rows get normalized inside.
Tensor fusion_similarity(const Tensor& video_feats, const Tensor& y_unit,
                         model::PoolingKind kind, const model::XPoolWeights& xpool,
                         int topk_kprime);

// InfoNCE on a precomputed (unscaled) similarity matrix.
Tensor contrastive_from_similarity(const Tensor& sims, const Tensor& inv_tau);

}  // namespace vtr::train
