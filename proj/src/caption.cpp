#include "vtr/caption.hpp"

#include <cmath>
#include <unordered_set>

namespace vtr::model {

using namespace vtr::core;

CaptionHeadWeights init_caption_head(int vocab_size, std::int64_t dim, int heads,
                                     int layers, std::int64_t max_len, Rng rng) {
  VTR_CHECK(layers >= 1, "caption head needs at least one decoder block");
  CaptionHeadWeights w;
  w.heads = heads;
  w.max_len = max_len;
  auto gaussian = [&rng](Shape shape) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)));
    for (auto& v : d) v = rng.normal(0.0, 0.02);
    return Tensor::from_data(std::move(shape), std::move(d), true);
  };
  auto fan_in = [&rng](std::int64_t in, std::int64_t out) {
    std::vector<double> d(static_cast<std::size_t>(in * out));
    for (auto& v : d) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    return Tensor::from_data({in, out}, std::move(d), true);
  };
  auto mha = [&fan_in, dim]() {
    core::MhaWeights m;
    m.wq = fan_in(dim, dim);
    m.bq = Tensor::zeros({dim}, true);
    m.wk = fan_in(dim, dim);
    m.bk = Tensor::zeros({dim}, true);
    m.wv = fan_in(dim, dim);
    m.bv = Tensor::zeros({dim}, true);
    m.wo = fan_in(dim, dim);
    m.bo = Tensor::zeros({dim}, true);
    return m;
  };
  w.tok_emb = gaussian({vocab_size, dim});
  w.pos_emb = gaussian({max_len, dim});
  for (int l = 0; l < layers; ++l) {
    (void)l;
    DecoderLayerWeights dl;
    dl.ln1_g = Tensor::full({dim}, 1.0).set_requires_grad(true);
    dl.ln1_b = Tensor::zeros({dim}, true);
    dl.self_attn = mha();
    dl.ln2_g = Tensor::full({dim}, 1.0).set_requires_grad(true);
    dl.ln2_b = Tensor::zeros({dim}, true);
    dl.cross_attn = mha();
    dl.ln3_g = Tensor::full({dim}, 1.0).set_requires_grad(true);
    dl.ln3_b = Tensor::zeros({dim}, true);
    dl.ff1_w = fan_in(dim, 4 * dim);
    dl.ff1_b = Tensor::zeros({4 * dim}, true);
    dl.ff2_w = fan_in(4 * dim, dim);
    dl.ff2_b = Tensor::zeros({dim}, true);
    w.layers.push_back(std::move(dl));
  }
  w.lnf_g = Tensor::full({dim}, 1.0).set_requires_grad(true);
  w.lnf_b = Tensor::zeros({dim}, true);
  w.out_w = fan_in(dim, vocab_size);
  w.out_b = Tensor::zeros({vocab_size}, true);
  return w;
}

TokenWeightTable tfidf_weights(const std::vector<TokenSequence>& corpus,
                               const Vocabulary& vocab) {
  VTR_CHECK(!corpus.empty(), "tfidf_weights: empty corpus");
  const int v = vocab.size();
  std::vector<std::int64_t> df(static_cast<std::size_t>(v), 0);
  for (const TokenSequence& seq : corpus) {
    std::unordered_set<int> present(seq.ids.begin(),
                                    seq.ids.begin() + seq.length);
    for (int id : present) df[static_cast<std::size_t>(id)] += 1;
  }
  const double n = static_cast<double>(corpus.size());
  TokenWeightTable table;
  table.prenorm.assign(static_cast<std::size_t>(v), 0.0);
  double max_pre = 0.0;
  for (int t = 0; t < v; ++t) {
    if (df[static_cast<std::size_t>(t)] > 0) {
      table.prenorm[static_cast<std::size_t>(t)] =
          std::log(n / static_cast<double>(df[static_cast<std::size_t>(t)]));
      max_pre = std::max(max_pre, table.prenorm[static_cast<std::size_t>(t)]);
    }
  }
  for (int t = 0; t < v; ++t) {
    if (df[static_cast<std::size_t>(t)] == 0)
      table.prenorm[static_cast<std::size_t>(t)] = max_pre;
  }
  table.normalized.assign(static_cast<std::size_t>(v), 0.0);
  if (max_pre > 0.0) {
    for (int t = 0; t < v; ++t)
      table.normalized[static_cast<std::size_t>(t)] =
          table.prenorm[static_cast<std::size_t>(t)] / max_pre;
  }
  table.normalized[Vocabulary::kPad] = 0.0;
  table.normalized[Vocabulary::kBos] = 0.0;
  table.prenorm[Vocabulary::kPad] = 0.0;
  table.prenorm[Vocabulary::kBos] = 0.0;
  return table;
}

CaptionLossResult caption_loss(const TokenSequence& tokens, const Tensor& prompts,
                               const CaptionHeadWeights& head,
                               const TokenWeightTable& table, TfidfMode mode,
                               Tensor* out_logits) {
  VTR_CHECK(tokens.length >= 2, "caption_loss: degenerate token sequence");
  VTR_CHECK_SHAPE(prompts.dim() == 2, "caption_loss: prompts must be [Nf,D]");
  const std::int64_t n = tokens.length - 1;  // positions predicting a next token
  VTR_CHECK(n <= head.max_len, "caption longer than the head's max_len");

  // shifted right: inputs are BOS..w_{last-1}, each predicting its successor
  std::vector<int> inputs(tokens.ids.begin(), tokens.ids.begin() + n);
  std::vector<int> targets(tokens.ids.begin() + 1, tokens.ids.begin() + n + 1);
  std::vector<double> weights(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double w = table.weight(targets[static_cast<std::size_t>(i)]);
    weights[static_cast<std::size_t>(i)] = mode == TfidfMode::mask ? (w > 0.0 ? 1.0 : 0.0) : w;
  }

  Tensor x = add(gather_rows(head.tok_emb, inputs), slice(head.pos_emb, 0, 0, n));
  Tensor mask = causal_mask(n);
  for (const DecoderLayerWeights& dl : head.layers) {
    Tensor sn = layer_norm(x, dl.ln1_g, dl.ln1_b);
    x = add(x, multi_head_attention(sn, sn, sn, dl.self_attn, head.heads, &mask));
    Tensor cn = layer_norm(x, dl.ln2_g, dl.ln2_b);
    x = add(x, multi_head_attention(cn, prompts, prompts, dl.cross_attn, head.heads));
    Tensor fn = layer_norm(x, dl.ln3_g, dl.ln3_b);
    x = add(x, linear(gelu(linear(fn, dl.ff1_w, dl.ff1_b)), dl.ff2_w, dl.ff2_b));
  }
  Tensor logits = linear(layer_norm(x, head.lnf_g, head.lnf_b), head.out_w, head.out_b);
  if (out_logits != nullptr) *out_logits = logits;

  CaptionLossResult res;
  res.loss = weighted_cross_entropy(logits, targets, weights, true, &res.all_weights_zero);
  return res;
}

}  // namespace vtr::model
