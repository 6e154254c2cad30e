#include "vtr/aggregate.hpp"

namespace vtr::model {

using namespace vtr::core;

AggregationWeights init_aggregation(std::int64_t dim, int heads, Rng rng) {
  AggregationWeights w;
  w.heads = heads;
  auto fan_in = [&rng, dim]() {
    std::vector<double> d(static_cast<std::size_t>(dim * dim));
    for (auto& v : d) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    return Tensor::from_data({dim, dim}, std::move(d), true);
  };
  w.attn.wq = fan_in();
  w.attn.bq = Tensor::zeros({dim}, true);
  w.attn.wk = fan_in();
  w.attn.bk = Tensor::zeros({dim}, true);
  w.attn.wv = fan_in();
  w.attn.bv = Tensor::zeros({dim}, true);
  w.attn.wo = Tensor::zeros({dim, dim}, true);  // zero init: starts as identity readout
  w.attn.bo = Tensor::zeros({dim}, true);
  w.final_ln_g = Tensor::full({dim}, 1.0).set_requires_grad(true);
  w.final_ln_b = Tensor::zeros({dim}, true);
  return w;
}

Tensor aggregate_frames(const Tensor& cls, const Tensor& cube,
                        const AggregationWeights& w) {
  VTR_CHECK_SHAPE(cls.dim() == 2 && cube.dim() == 3, "aggregate_frames: cls ",
                  shape_str(cls.shape()), ", cube ", shape_str(cube.shape()));
  const std::int64_t nf = cls.extent(0), d = cls.extent(1);
  VTR_CHECK_SHAPE(cube.extent(2) == d, "aggregate_frames: channel mismatch");
  Tensor flat = reshape(cube, {cube.extent(0) * cube.extent(1), d});  // [Nf^2, D]
  // every frame's CLS row queries the same flattened cube; softmax is
  // row-independent so one attention call covers all frames
  Tensor attended = multi_head_attention(cls, flat, flat, w.attn, w.heads);
  return layer_norm(add(cls, attended), w.final_ln_g, w.final_ln_b);
}

Tensor baseline_prompts(const Tensor& cls, const AggregationWeights& w) {
  return layer_norm(cls, w.final_ln_g, w.final_ln_b);
}

Tensor pool_video(const Tensor& prompts, int k, bool training, Rng& rng) {
  VTR_CHECK_SHAPE(prompts.dim() == 2, "pool_video: prompts must be [Nf,D]");
  const std::int64_t nf = prompts.extent(0);
  VTR_CHECK(k >= 1 && k <= nf, "pool_video: k=", k, " outside [1,", nf, "]");
  if (training && k < static_cast<int>(nf)) {
    std::vector<int> pick = rng.sample_without_replacement(static_cast<int>(nf), k);
    return mean_rows(l2_normalize_rows(gather_rows(prompts, pick)));
  }
  // inference, and full-sample training selection, pool every row
  return mean_rows(l2_normalize_rows(prompts));
}

}  // namespace vtr::model
