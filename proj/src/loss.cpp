#include "vtr/loss.hpp"

#include <cmath>

namespace vtr::train {

using namespace vtr::core;

Tensor contrastive_from_similarity(const Tensor& sims, const Tensor& inv_tau) {
  VTR_CHECK_SHAPE(sims.dim() == 2 && sims.extent(0) == sims.extent(1),
                  "similarity matrix must be square, got ", shape_str(sims.shape()));
  const std::int64_t b = sims.extent(0);
  VTR_CHECK(b >= 1, "empty batch");
  Tensor logits = mul_scalar_tensor(sims, inv_tau);
  std::vector<int> diag(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) diag[static_cast<std::size_t>(i)] = static_cast<int>(i);
  std::vector<double> ones(static_cast<std::size_t>(b), 1.0);
  Tensor l_v2t = weighted_cross_entropy(logits, diag, ones, false);
  Tensor l_t2v = weighted_cross_entropy(transpose2d(logits), diag, ones, false);
  return scale(add(l_v2t, l_t2v), 0.5);
}

Tensor contrastive_loss(const Tensor& x, const Tensor& y, const Tensor& inv_tau) {
  VTR_CHECK_SHAPE(x.dim() == 2 && y.dim() == 2 && x.shape() == y.shape(),
                  "contrastive_loss: X ", shape_str(x.shape()), " vs Y ",
                  shape_str(y.shape()));
  Tensor xn = l2_normalize_rows(x);
  Tensor yn = l2_normalize_rows(y);
  return contrastive_from_similarity(matmul(xn, transpose2d(yn)), inv_tau);
}

namespace {

// column j of S for one video: sim(video frames F, every text row of Y)
Tensor video_column(const Tensor& frames_unit, const Tensor& y_unit,
                    model::PoolingKind kind, const model::XPoolWeights& xpool,
                    int topk_kprime) {
  const std::int64_t b = y_unit.extent(0);
  const std::int64_t nf = frames_unit.extent(0);
  const std::int64_t d = frames_unit.extent(1);
  switch (kind) {
    case model::PoolingKind::attention: {
      Tensor logits = matmul(y_unit, transpose2d(frames_unit));  // [B,Nf]
      Tensor w = softmax(logits, 1);
      Tensor pooled = l2_normalize_rows(matmul(w, frames_unit));  // [B,D]
      return rowwise_sum(mul(y_unit, pooled));                    // [B]
    }
    case model::PoolingKind::topk: {
      Tensor sims = matmul(y_unit, transpose2d(frames_unit));  // [B,Nf]
      // constant top-k' selection mask; gradient flows through the
      // selected entries only
      Tensor mask = Tensor::zeros({b, nf});
      for (std::int64_t r = 0; r < b; ++r) {
        std::vector<std::pair<double, std::int64_t>> row;
        row.reserve(static_cast<std::size_t>(nf));
        for (std::int64_t f = 0; f < nf; ++f)
          row.push_back({sims.at({r, f}), f});
        std::sort(row.begin(), row.end(), [](const auto& a, const auto& b2) {
          if (a.first != b2.first) return a.first > b2.first;
          return a.second < b2.second;
        });
        for (int t = 0; t < topk_kprime; ++t)
          mask.at({r, row[static_cast<std::size_t>(t)].second}) =
              1.0 / static_cast<double>(topk_kprime);
      }
      return rowwise_sum(mul(sims, mask));  // [B]
    }
    case model::PoolingKind::xpool: {
      Tensor q = matmul(y_unit, xpool.wq);                       // [B,D]
      Tensor keys = matmul(frames_unit, xpool.wk);               // [Nf,D]
      Tensor logits = scale(matmul(q, transpose2d(keys)),
                            1.0 / std::sqrt(static_cast<double>(d)));
      Tensor w = softmax(logits, 1);                             // [B,Nf]
      Tensor vals = matmul(frames_unit, xpool.wv);               // [Nf,D]
      Tensor pooled = l2_normalize_rows(matmul(matmul(w, vals), xpool.wo));
      return rowwise_sum(mul(y_unit, pooled));                   // [B]
    }
    default:
      throw Error("video_column: mean pooling has no per-video column path");
  }
}

}  // namespace

Tensor fusion_similarity(const Tensor& video_feats, const Tensor& y_unit,
                         model::PoolingKind kind, const model::XPoolWeights& xpool,
                         int topk_kprime) {
  if (kind == model::PoolingKind::mean) {
    VTR_CHECK_SHAPE(video_feats.dim() == 2, "mean pooling expects [B,D] features");
    return matmul(l2_normalize_rows(video_feats), transpose2d(y_unit));
  }
  VTR_CHECK_SHAPE(video_feats.dim() == 3, "cross-modal pooling expects [B,Nf,D]");
  const std::int64_t b = video_feats.extent(0);
  VTR_CHECK_SHAPE(y_unit.extent(0) == b, "batch size mismatch");
  std::vector<Tensor> columns;
  columns.reserve(static_cast<std::size_t>(b));
  for (std::int64_t v = 0; v < b; ++v) {
    Tensor frames = l2_normalize_rows(reshape(
        slice(video_feats, 0, v, v + 1), {video_feats.extent(1), video_feats.extent(2)}));
    Tensor col = video_column(frames, y_unit, kind, xpool, topk_kprime);  // [B]
    columns.push_back(reshape(col, {1, b}));
  }
  // stacked rows are per-video similarity columns: S[v][t]
  return concat(columns, 0);
}

}  // namespace vtr::train
