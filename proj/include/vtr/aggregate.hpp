#pragma once

#include "vtr/encoder.hpp"

namespace vtr::model {

// CLS-guided readout of the final cube plus the tower's final layer norm.
// The final LN is shared between the aggregation path and the plain CLS
// path, mirroring the backbone's last normalization layer.
struct AggregationWeights {
  core::MhaWeights attn;  // output projection starts as the zero tensor
  Tensor final_ln_g, final_ln_b;
  int heads = 4;
};

AggregationWeights init_aggregation(std::int64_t dim, int heads, Rng rng);

// p_i = LN(c_i + MHA(c_i, P_flat, P_flat)) for every frame at once.
Tensor aggregate_frames(const Tensor& cls, const Tensor& cube,
                        const AggregationWeights& w);

// The plain path the aggregation collapses to at init: LN(c_i) rows.
Tensor baseline_prompts(const Tensor& cls, const AggregationWeights& w);

// Mean of unit-normalized prompt rows. During training, k distinct rows are
// sampled uniformly over all size-k subsets; inference uses every row.
Tensor pool_video(const Tensor& prompts, int k, bool training, Rng& rng);

}  // namespace vtr::model
